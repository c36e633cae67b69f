"""Backward kernels induced by a particle cloud: exact multinomial draws,
linear-time accept-reject draws, backward-simulation of whole paths, and
the quadratic forward-only smoothing update kept as a complexity baseline.

Backward weights over source particles are proportional to
``exp(log_potential(source) + log_transition_density(source, target))``.
The accept-reject sampler draws candidates from the normalized potentials
(already available from the forward pass) and accepts with probability
``transition_density / transition_density_upper``, which leaves the
marginal law of the returned index exactly equal to the backward
probabilities.
"""

from __future__ import annotations

from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .core import (
    DegenerateWeightsError,
    FeynmanKacModel,
    ModelContractError,
    TermFn,
    Trajectory,
    UnsupportedModelError,
)
from .smc import ParticleCloud, categorical_indices, normalized_weights

# Upper-bound slack for the accept-reject contract check; tolerates solver
# rounding in model densities without masking genuine violations.
_CONTRACT_SLACK = 1e-9

# Pairwise (chunk x N) work proceeds in ~1 MB slabs: big enough to amortize
# call overhead, small enough that the two live slabs stay cache-resident
# (24 MB slabs measured ~3x slower; >32 MB additionally pays glibc mmap
# page faults on every chunk).
_CHUNK_BUDGET = 125_000


def _chunk_rows(n_sources: int) -> int:
    return max(1, _CHUNK_BUDGET // max(n_sources, 1))


def log_q_values(
    model: FeynmanKacModel, cloud: ParticleCloud, target: np.ndarray
) -> np.ndarray:
    """Unnormalized backward log-weights of every source particle for one
    target state: log g(source) + log m(source, target)."""
    lm = model.log_transition_density(
        cloud.time, cloud.positions, target[None, :]
    )
    return np.asarray(lm, dtype=float) + cloud.log_potentials


class BackwardContext:
    """One backward-sampling problem: a source cloud and a single target
    state at the next time index.  Exact q-values are computed lazily so the
    accept-reject path never pays for them."""

    def __init__(self, model: FeynmanKacModel, cloud: ParticleCloud, target: np.ndarray):
        self.model = model
        self.cloud = cloud
        self.target = np.asarray(target, dtype=float)

    @cached_property
    def log_q(self) -> np.ndarray:
        return log_q_values(self.model, self.cloud, self.target)


def backward_probabilities(ctx: BackwardContext) -> np.ndarray:
    """Normalized backward probabilities over the source particles.

    Raises:
        DegenerateWeightsError: if every q-value is zero.
    """
    return normalized_weights(ctx.log_q)


def sample_backward_exact(ctx: BackwardContext, rng: np.random.Generator) -> int:
    """One categorical draw from the exact backward probabilities; O(N)."""
    return int(categorical_indices(backward_probabilities(ctx), rng, 1)[0])


def default_max_trials(N: int) -> int:
    """Trial cap before falling back to the exact sampler: ceil(sqrt(N))."""
    return int(np.ceil(np.sqrt(N)))


def sample_backward_ar(
    ctx: BackwardContext,
    rng: np.random.Generator,
    max_trials: Optional[int] = None,
) -> int:
    """One backward draw by accept-reject; marginal law identical to
    :func:`sample_backward_exact`."""
    idx = backward_indices_ar(
        ctx.model,
        ctx.cloud,
        ctx.target[None, :],
        1,
        rng,
        selection_weights=normalized_weights(ctx.cloud.log_potentials),
        max_trials=max_trials,
    )
    return int(idx[0, 0])


def backward_indices_exact(
    model: FeynmanKacModel,
    cloud: ParticleCloud,
    targets: np.ndarray,
    draws: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """``draws`` exact backward indices for each target row; O(K*N) q-value
    work per call, chunked over targets.  Returns int array (K, draws)."""
    K = targets.shape[0]
    N = cloud.size
    out = np.empty((K, draws), dtype=np.intp)
    rows = _chunk_rows(N)
    for start in range(0, K, rows):
        chunk = targets[start : start + rows]
        lq = model.log_transition_density(
            cloud.time, cloud.positions[None, :, :], chunk[:, None, :]
        )
        lq = np.asarray(lq, dtype=float)
        lq += cloud.log_potentials[None, :]
        top = lq.max(axis=1)
        if not np.all(np.isfinite(top)):
            raise DegenerateWeightsError("a target has zero total backward weight")
        np.exp(lq - top[:, None], out=lq)
        cum = np.cumsum(lq, axis=1)
        cum /= cum[:, -1:]
        np.minimum(cum, 1.0, out=cum)
        C = cum.shape[0]
        offsets = np.arange(C, dtype=float)[:, None]
        u = rng.random((C, draws))
        flat_pos = np.searchsorted((cum + offsets).ravel(), (u + offsets).ravel(), side="left")
        idx = flat_pos.reshape(C, draws) - np.arange(C)[:, None] * N
        out[start : start + rows] = np.minimum(idx, N - 1)
    return out


def backward_indices_ar(
    model: FeynmanKacModel,
    cloud: ParticleCloud,
    targets: np.ndarray,
    draws: int,
    rng: np.random.Generator,
    selection_weights: Optional[np.ndarray] = None,
    max_trials: Optional[int] = None,
    trial_counts: Optional[np.ndarray] = None,
) -> np.ndarray:
    """``draws`` accept-reject backward indices per target row, O(K*draws)
    expected work.  Slots still rejected after ``max_trials`` candidates are
    finished by the exact sampler, which leaves the marginal law unchanged.

    ``selection_weights`` are the normalized potentials of the source cloud;
    pass them when the forward pass already computed them.  ``trial_counts``
    (flat length K*draws) collects per-slot candidate counts when provided.
    """
    upper = model.transition_density_upper(cloud.time)
    if upper is None:
        raise UnsupportedModelError(
            f"model declares no transition density bound at time {cloud.time}"
        )
    log_upper = np.log(upper)
    if selection_weights is None:
        selection_weights = normalized_weights(cloud.log_potentials)
    if max_trials is None:
        max_trials = default_max_trials(cloud.size)

    K = targets.shape[0]
    cum = np.cumsum(selection_weights)
    out = np.empty(K * draws, dtype=np.intp)
    slot_target = np.repeat(np.arange(K), draws)
    active = np.arange(K * draws)

    for _ in range(max_trials):
        if active.size == 0:
            break
        u = rng.random(active.size)
        cand = np.minimum(np.searchsorted(cum, u, side="left"), cloud.size - 1)
        log_m = np.asarray(
            model.log_transition_density(
                cloud.time,
                cloud.positions[cand],
                targets[slot_target[active]],
            ),
            dtype=float,
        )
        if np.any(log_m > log_upper + _CONTRACT_SLACK):
            raise ModelContractError(
                "transition density exceeds its declared upper bound "
                f"at time {cloud.time}"
            )
        accept = rng.random(active.size) < np.exp(log_m - log_upper)
        if trial_counts is not None:
            trial_counts[active] += 1
        out[active[accept]] = cand[accept]
        active = active[~accept]

    if active.size:
        # Exact finish for the capped slots; expected to be rare.
        for slot in active:
            lq = log_q_values(model, cloud, targets[slot_target[slot]])
            out[slot] = categorical_indices(normalized_weights(lq), rng, 1)[0]
    return out.reshape(K, draws)


def ffbsi_sample_path(
    model: FeynmanKacModel,
    clouds: Sequence[ParticleCloud],
    rng: np.random.Generator,
    mode: str = "exact",
) -> Trajectory:
    """Backward-simulate one path through a sequence of filter clouds:
    uniform draw in the last generation, then recursive backward draws.

    ``mode`` selects the per-step sampler: "exact" or "ar".
    """
    if mode not in ("exact", "ar"):
        raise ValueError(f"unknown backward mode {mode!r}")
    sizes = {c.size for c in clouds}
    if len(sizes) != 1:
        raise ValueError("clouds must share a common particle count")
    times = [c.time for c in clouds]
    if times != list(range(times[0], times[0] + len(clouds))):
        raise ValueError("clouds must cover contiguous time indices")

    n = len(clouds) - 1
    states = np.empty((n + 1, clouds[0].positions.shape[1]))
    idx = int(rng.integers(clouds[n].size))
    states[n] = clouds[n].positions[idx]
    for m in range(n - 1, -1, -1):
        ctx = BackwardContext(model, clouds[m], states[m + 1])
        if mode == "exact":
            idx = sample_backward_exact(ctx, rng)
        else:
            idx = sample_backward_ar(ctx, rng)
        states[m] = clouds[m].positions[idx]
    return Trajectory(states=states)


def _ffbsm_row(model, term, cloud, stats, target):
    """Single-target update with per-row max normalization; the slow exact
    path used to rescue rows the shared-offset pass underflowed."""
    lq = log_q_values(model, cloud, target)
    top = lq.max()
    if not np.isfinite(top):
        raise DegenerateWeightsError("a target has zero total backward weight")
    weights = np.exp(lq - top)
    values = term(cloud.positions, target[None, :]) + stats
    return float(weights @ values / weights.sum())


def ffbsm_forward_update(
    model: FeynmanKacModel,
    term: TermFn,
    cloud: ParticleCloud,
    stats: np.ndarray,
    cloud_next: ParticleCloud,
) -> np.ndarray:
    """Exact forward-only smoothing update: for every particle of the next
    cloud, the backward-probability-weighted average of (source statistic +
    pairwise term).  O(N^2); deliberately the unoptimized baseline.

    Weights are exponentiated against a shared upper bound on the log
    q-values when the model declares one (cheaper than per-row maxima);
    rows that underflow to zero total weight are redone with their own
    maximum, so results match log-sum-exp normalization.
    """
    if stats.shape != (cloud.size,):
        raise ValueError("stats must hold one value per source particle")
    upper = model.transition_density_upper(cloud.time)
    top_potential = cloud.log_potentials.max()
    if not np.isfinite(top_potential):
        raise DegenerateWeightsError("all source potentials vanish")
    use_shared_offset = upper is not None and np.isfinite(upper)
    if use_shared_offset:
        shift = cloud.log_potentials - (top_potential + np.log(upper))

    N = cloud.size
    K = cloud_next.size
    out = np.empty(K)
    rows = _chunk_rows(N)
    for start in range(0, K, rows):
        tgt = cloud_next.positions[start : start + rows]
        lq = np.asarray(
            model.log_transition_density(
                cloud.time, cloud.positions[None, :, :], tgt[:, None, :]
            ),
            dtype=float,
        )
        if use_shared_offset:
            lq += shift[None, :]
        else:
            lq += cloud.log_potentials[None, :]
            top = lq.max(axis=1)
            if not np.all(np.isfinite(top)):
                raise DegenerateWeightsError("a target has zero total backward weight")
            lq -= top[:, None]
        np.exp(lq, out=lq)
        denom = lq.sum(axis=1)
        values = term(cloud.positions[None, :, :], tgt[:, None, :])
        num = lq @ stats + np.einsum("ij,ij->i", lq, values)
        block = out[start : start + rows]
        np.divide(num, denom, out=block, where=denom > 0)
        for r in np.nonzero(denom == 0)[0]:
            block[r] = _ffbsm_row(model, term, cloud, stats, tgt[r])
    return out
