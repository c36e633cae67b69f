"""Model-agnostic building blocks: the Feynman-Kac model interface,
additive functionals, trajectories, and the mixing constants that control
the particle Gibbs contraction rate.

States are opaque fixed-size numeric vectors: every state array has shape
``(..., state_dim)`` and model callbacks must broadcast over the leading
axes. All densities and potentials are exchanged in log domain (raw
potentials underflow for long horizons).
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np


class DegenerateWeightsError(RuntimeError):
    """All particle weights vanished (every log-potential or log-q is -inf)."""


class ModelContractError(RuntimeError):
    """A model callback violated its declared contract (e.g. a transition
    density exceeding its declared upper bound)."""


class UnsupportedModelError(ValueError):
    """The model does not expose what the operation requires (e.g. mixing
    bounds for models on unbounded spaces)."""


@dataclass(frozen=True)
class MixingBounds:
    """Uniform potential/transition-density bounds at one time index.

    ``potential_low <= g_m <= potential_high`` and
    ``transition_low <= m_m(x, x')`` everywhere; the transition upper bound
    lives in :meth:`FeynmanKacModel.transition_density_upper`.
    """

    potential_low: float
    potential_high: float
    transition_low: float

    def __post_init__(self):
        if not (0 < self.potential_low <= self.potential_high):
            raise ValueError("potential bounds must satisfy 0 < low <= high")
        if self.transition_low <= 0:
            raise ValueError("transition lower bound must be positive")


class FeynmanKacModel(ABC):
    """Caller-supplied model: initial law, mutation kernels, transition
    log-densities and log-potentials.

    Callbacks must be pure and safe to invoke concurrently; all randomness
    flows through explicitly passed ``numpy.random.Generator`` streams.
    State arrays have shape ``(..., state_dim)``.
    """

    @property
    @abstractmethod
    def state_dim(self) -> int:
        """Length of the opaque state vector."""

    @abstractmethod
    def sample_initial(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` i.i.d. states from the initial law, shape (size, d)."""

    @abstractmethod
    def sample_mutation(
        self, rng: np.random.Generator, m: int, x: np.ndarray
    ) -> np.ndarray:
        """Draw one mutation step at time ``m`` for each row of ``x``."""

    @abstractmethod
    def log_transition_density(
        self, m: int, x: np.ndarray, x_next: np.ndarray
    ) -> np.ndarray:
        """log m_m(x, x') w.r.t. the dominating measure, broadcast over
        leading axes of ``x`` and ``x_next``."""

    @abstractmethod
    def log_potential(self, m: int, x: np.ndarray) -> np.ndarray:
        """log g_m(x), broadcast over leading axes."""

    @abstractmethod
    def transition_density_upper(self, m: int) -> Optional[float]:
        """Finite upper bound on m_m, or None when unavailable (disables the
        accept-reject backward sampler)."""

    def mixing_bounds(self, m: int) -> Optional[MixingBounds]:
        """Strong-mixing bounds at time ``m``; None for models that violate
        them (Gaussian tails on unbounded spaces)."""
        return None


TermFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class AdditiveFunctional:
    """Sum functional h(x_{0:n}) = sum_m term_m(x_m, x_{m+1}).

    ``terms[m]`` must broadcast over leading state axes.  ``sup_norms`` are
    caller-declared bounds used only by theoretical-bound evaluation; None
    when the terms are unbounded.
    """

    terms: Sequence[TermFn]
    sup_norms: Optional[Sequence[float]] = None

    def __post_init__(self):
        if self.sup_norms is not None and len(self.sup_norms) != len(self.terms):
            raise ValueError("sup_norms must match terms in length")

    def __len__(self) -> int:
        return len(self.terms)

    def term(self, m: int) -> TermFn:
        return self.terms[m]

    def sup_norm_total(self, n: Optional[int] = None) -> float:
        """sum_{m<n} ||term_m||_inf; requires declared sup_norms."""
        if self.sup_norms is None:
            raise UnsupportedModelError(
                "functional has no declared sup norms; bound evaluation unavailable"
            )
        n = len(self.terms) if n is None else n
        return float(np.sum(np.asarray(self.sup_norms[:n], dtype=float)))


@dataclass(frozen=True)
class Trajectory:
    """A state path x_{0:n}, stored as an array of shape (n+1, state_dim)."""

    states: np.ndarray

    def __post_init__(self):
        if self.states.ndim != 2 or self.states.shape[0] < 1:
            raise ValueError("trajectory must be a (length >= 1, state_dim) array")

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        """n, the index of the last state."""
        return self.states.shape[0] - 1


def eval_additive(functional: AdditiveFunctional, path: Trajectory) -> float:
    """Evaluate the additive functional on a path.

    Returns 0.0 for a single-state path (the empty-sum convention).

    Raises:
        ValueError: if the functional declares fewer terms than the path
            has transitions.
    """
    n = path.horizon
    if n > len(functional):
        raise ValueError(
            f"path has {n} transitions but functional defines {len(functional)} terms"
        )
    total = 0.0
    for m in range(n):
        total += float(functional.term(m)(path.states[m], path.states[m + 1]))
    return total


def mixing_constant_rho(model: FeynmanKacModel, n: int) -> float:
    """max over m <= n of (potential_high * density_high) /
    (potential_low * density_low); >= 1 for any valid bounds."""
    ratios = []
    for m in range(n + 1):
        bounds = model.mixing_bounds(m)
        upper = model.transition_density_upper(m)
        if bounds is None or upper is None:
            raise UnsupportedModelError(
                f"model exposes no mixing bounds at time {m}; "
                "mixing constants are unavailable"
            )
        ratios.append(
            (bounds.potential_high * upper) / (bounds.potential_low * bounds.transition_low)
        )
    return float(max(ratios))


def particle_count_threshold(rho: float, n: int) -> float:
    """Minimal particle count above which the contraction rate is nontrivial."""
    return 1.0 + 2.5 * rho * rho * n


def kappa_from_rho(rho: float, n: int, N: int) -> float:
    """Particle Gibbs contraction rate from the mixing ratio; in (0, 1)
    whenever N exceeds the particle-count threshold."""
    threshold = particle_count_threshold(rho, n)
    if N <= threshold:
        raise ValueError(
            f"N={N} must exceed {threshold:.6g} for the contraction bound to hold"
        )
    return 1.0 - (1.0 - threshold / N) / (1.0 + 4.0 * n * (1.0 + 2.0 * rho * rho) / N)


def kappa(model: FeynmanKacModel, n: int, N: int) -> float:
    """Contraction rate of the particle Gibbs kernel for this model/horizon."""
    return kappa_from_rho(mixing_constant_rho(model, n), n, N)
