"""Bootstrap particle filter (multinomial selection + mutation) and the
conditional variant that pins a frozen state at a uniformly random slot.

Selection is per-particle i.i.d. categorical on the normalized potentials,
matching the mixture form of the one-step particle dynamics; systematic or
stratified schemes are deliberately not offered.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DegenerateWeightsError, FeynmanKacModel


@dataclass(frozen=True)
class ParticleCloud:
    """N particles at one time index, with their cached log-potentials."""

    time: int
    positions: np.ndarray       # (N, state_dim)
    log_potentials: np.ndarray  # (N,)

    def __post_init__(self):
        if self.positions.ndim != 2 or self.positions.shape[0] < 1:
            raise ValueError("positions must be a nonempty (N, state_dim) array")
        if self.log_potentials.shape != (self.positions.shape[0],):
            raise ValueError("log_potentials must be one value per particle")

    @property
    def size(self) -> int:
        return self.positions.shape[0]


def normalized_weights(log_weights: np.ndarray) -> np.ndarray:
    """Exponentiate and normalize log-weights via log-sum-exp.

    Raises:
        DegenerateWeightsError: if every entry is -inf (zero total weight).
    """
    top = np.max(log_weights)
    if not np.isfinite(top):
        raise DegenerateWeightsError("all log-weights are -inf")
    w = np.exp(log_weights - top)
    return w / w.sum()


def categorical_indices(
    weights: np.ndarray, rng: np.random.Generator, size: int
) -> np.ndarray:
    """``size`` i.i.d. draws from a categorical distribution by inverse CDF;
    ties on the cumulative weights break toward the lower index."""
    cum = np.cumsum(weights)
    u = rng.random(size)
    return np.minimum(np.searchsorted(cum, u, side="left"), len(weights) - 1)


def _make_cloud(model: FeynmanKacModel, time: int, positions: np.ndarray) -> ParticleCloud:
    return ParticleCloud(
        time=time,
        positions=positions,
        log_potentials=np.asarray(model.log_potential(time, positions), dtype=float),
    )


def init_cloud(model: FeynmanKacModel, N: int, rng: np.random.Generator) -> ParticleCloud:
    """N i.i.d. draws from the initial law, at time 0."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return _make_cloud(model, 0, model.sample_initial(rng, N))


def propagate(
    model: FeynmanKacModel, cloud: ParticleCloud, rng: np.random.Generator
) -> ParticleCloud:
    """One selection+mutation step: each new particle picks an ancestor with
    probability proportional to its potential and mutates it."""
    weights = normalized_weights(cloud.log_potentials)
    ancestors = categorical_indices(weights, rng, cloud.size)
    positions = model.sample_mutation(rng, cloud.time, cloud.positions[ancestors])
    return _make_cloud(model, cloud.time + 1, positions)


def init_cloud_conditional(
    model: FeynmanKacModel, N: int, z0: np.ndarray, rng: np.random.Generator
) -> tuple[ParticleCloud, int]:
    """Initial cloud with ``z0`` frozen at a uniformly random slot and the
    other N-1 slots drawn from the initial law.  Returns (cloud, slot)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    positions = model.sample_initial(rng, N)
    slot = int(rng.integers(N))
    positions[slot] = z0
    return _make_cloud(model, 0, positions), slot


def propagate_conditional(
    model: FeynmanKacModel,
    cloud: ParticleCloud,
    z_next: np.ndarray,
    rng: np.random.Generator,
) -> tuple[ParticleCloud, int]:
    """Selection+mutation with ``z_next`` frozen at a uniformly random slot.

    The returned slot index lets callers keep frozen-path bookkeeping O(1).
    """
    weights = normalized_weights(cloud.log_potentials)
    ancestors = categorical_indices(weights, rng, cloud.size)
    positions = model.sample_mutation(rng, cloud.time, cloud.positions[ancestors])
    slot = int(rng.integers(cloud.size))
    positions[slot] = z_next
    return _make_cloud(model, cloud.time + 1, positions), slot
