"""Exact references the Monte Carlo estimators are judged against.

For the scalar linear-Gaussian model: Kalman filtering, fixed-interval
smoothing with lag-one covariances via the smoother-gain recursion, and an
exact joint-posterior path sampler.  NaN entries in an observation record
mean "missing": the filter skips the update, so the same code conditions
on any subset of observations.

For the finite discrete HMM: the smoothed additive functional both by the
forward filter/backward kernel recursion (scales to long horizons) and by
exhaustive path enumeration (tiny instances); each validates the other.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import AdditiveFunctional, Trajectory
from .models import DiscreteHmm, Lgssm

# ---------------------------------------------------------------------------
# Linear-Gaussian model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SmoothingMoments:
    """Gaussian smoothing summary: per-time means and variances of the
    states given the observations, plus consecutive-pair covariances."""

    means: np.ndarray          # (n+1,)
    variances: np.ndarray      # (n+1,)
    lag_one_covs: np.ndarray   # (n,)

    def __post_init__(self):
        if np.any(self.variances < 0):
            raise ArithmeticError("smoothed variances must be nonnegative")
        if self.lag_one_covs.shape != (self.means.shape[0] - 1,):
            raise ValueError("need one lag-one covariance per consecutive pair")


def _kalman_forward(model: Lgssm, observations: np.ndarray):
    """Filtered and predicted means/variances; NaN observations skip the
    measurement update."""
    zs = np.asarray(observations, dtype=float)
    n = zs.shape[0] - 1
    if n < 0:
        raise ValueError("need at least one time index")
    a, q = model.state_coef, model.state_noise
    b, r = model.obs_coef, model.obs_noise
    mean_pred = np.empty(n + 1)
    var_pred = np.empty(n + 1)
    mean_filt = np.empty(n + 1)
    var_filt = np.empty(n + 1)
    mean_pred[0] = 0.0
    var_pred[0] = model.stationary_sd**2
    for m in range(n + 1):
        if m > 0:
            mean_pred[m] = a * mean_filt[m - 1]
            var_pred[m] = a * a * var_filt[m - 1] + q * q
        if np.isnan(zs[m]):
            mean_filt[m] = mean_pred[m]
            var_filt[m] = var_pred[m]
        else:
            innov_var = b * b * var_pred[m] + r * r
            gain = var_pred[m] * b / innov_var
            mean_filt[m] = mean_pred[m] + gain * (zs[m] - b * mean_pred[m])
            var_filt[m] = (1.0 - gain * b) * var_pred[m]
    return mean_filt, var_filt, mean_pred, var_pred


def kalman_rts(model: Lgssm, observations: np.ndarray) -> SmoothingMoments:
    """Exact smoothing moments of x_{0:n} given a record of n+1 observations
    (NaN entries are treated as missing).

    The lag-one covariance at m is smoother_gain_m * smoothed_var_{m+1}.
    """
    mean_filt, var_filt, mean_pred, var_pred = _kalman_forward(model, observations)
    n = mean_filt.shape[0] - 1
    a = model.state_coef
    means = np.empty(n + 1)
    variances = np.empty(n + 1)
    lag_one = np.empty(n)
    means[n] = mean_filt[n]
    variances[n] = var_filt[n]
    for m in range(n - 1, -1, -1):
        gain = var_filt[m] * a / var_pred[m + 1]
        means[m] = mean_filt[m] + gain * (means[m + 1] - mean_pred[m + 1])
        variances[m] = var_filt[m] + gain * gain * (variances[m + 1] - var_pred[m + 1])
        lag_one[m] = gain * variances[m + 1]
    return SmoothingMoments(means=means, variances=variances, lag_one_covs=lag_one)


def exact_one_lag_expectation(moments: SmoothingMoments) -> float:
    """E[sum_m x_m x_{m+1} | observations] from smoothing moments."""
    return float(
        np.sum(moments.lag_one_covs + moments.means[:-1] * moments.means[1:])
    )


def sample_posterior_paths(
    model: Lgssm, observations: np.ndarray, rng: np.random.Generator, size: int
) -> np.ndarray:
    """``size`` exact draws from the joint smoothing law, by backward
    Gaussian conditionals after a shared Kalman forward pass; (size, n+1)."""
    mean_filt, var_filt, mean_pred, var_pred = _kalman_forward(model, observations)
    n = mean_filt.shape[0] - 1
    a = model.state_coef
    states = np.empty((size, n + 1))
    states[:, n] = rng.normal(mean_filt[n], np.sqrt(var_filt[n]), size=size)
    for m in range(n - 1, -1, -1):
        gain = var_filt[m] * a / var_pred[m + 1]
        mean = mean_filt[m] + gain * (states[:, m + 1] - mean_pred[m + 1])
        sd = np.sqrt(max(var_filt[m] - gain * gain * var_pred[m + 1], 0.0))
        states[:, m] = mean + sd * rng.standard_normal(size)
    return states


def sample_posterior_path(
    model: Lgssm, observations: np.ndarray, rng: np.random.Generator
) -> Trajectory:
    """One exact draw from the joint smoothing law."""
    return Trajectory(states=sample_posterior_paths(model, observations, rng, 1)[0][:, None])


def _first_n_padded(observations: np.ndarray, n: int) -> np.ndarray:
    """Record for horizon n: observations 0..n-1 plus a missing final slot,
    matching the convention that the final state is never reweighted."""
    zs = np.asarray(observations, dtype=float)
    if zs.shape[0] < n:
        raise ValueError(f"horizon {n} needs at least {n} observations")
    return np.concatenate([zs[:n], [np.nan]])


def lgssm_smoothing_reference(
    model: Lgssm, observations: np.ndarray, n: int
) -> SmoothingMoments:
    """Smoothing moments of x_{0:n} under the horizon-n estimand."""
    return kalman_rts(model, _first_n_padded(observations, n))


def lgssm_one_lag_reference(model: Lgssm, observations: np.ndarray, n: int) -> float:
    """Exact value the horizon-n one-lag estimators target."""
    return exact_one_lag_expectation(lgssm_smoothing_reference(model, observations, n))


def sample_target_path(
    model: Lgssm, observations: np.ndarray, n: int, rng: np.random.Generator
) -> Trajectory:
    """Exact draw of x_{0:n} from the horizon-n estimand distribution."""
    return sample_posterior_path(model, _first_n_padded(observations, n), rng)


# ---------------------------------------------------------------------------
# Discrete HMM
# ---------------------------------------------------------------------------


def discrete_predictive_filter(model: DiscreteHmm, observations: np.ndarray) -> np.ndarray:
    """Predictive distributions for times 0..len(observations): row m is the
    law of the state at m given observations 0..m-1 (row 0 is the initial
    law)."""
    zs = np.asarray(observations, dtype=np.intp)
    dists = np.empty((zs.shape[0] + 1, model.n_states))
    dists[0] = model.initial_distribution()
    for m, z in enumerate(zs):
        weighted = dists[m] * model.emission[:, z]
        total = weighted.sum()
        if total <= 0:
            raise ArithmeticError("zero-probability observation record")
        dists[m + 1] = weighted @ model.transition / total
    return dists


def discrete_exact_smoothing(
    model: DiscreteHmm,
    observations: np.ndarray,
    functional: AdditiveFunctional,
    n: int | None = None,
) -> float:
    """Exact smoothed additive functional for the horizon-n estimand by the
    forward-only recursion: propagate per-state conditional expectations
    through the exact backward kernels of the predictive flow."""
    zs = np.asarray(observations, dtype=np.intp)
    if n is None:
        n = zs.shape[0] - 1
    if n > len(functional):
        raise ValueError("functional declares too few terms for this horizon")
    predictive = discrete_predictive_filter(model, zs[:n])
    grid = np.arange(model.n_states, dtype=float)[:, None]
    expectations = np.zeros(model.n_states)
    for m in range(n):
        # backward[j, i] = P(state_m = i | state_{m+1} = j, obs_{0:m-1})
        forward_weight = predictive[m] * model.emission[:, zs[m]]
        joint = forward_weight[:, None] * model.transition
        backward = (joint / joint.sum(axis=0)[None, :]).T
        pair_values = functional.term(m)(grid[:, None, :], grid[None, :, :])
        expectations = backward @ expectations + np.sum(
            backward * pair_values.T, axis=1
        )
    return float(predictive[n] @ expectations)


def discrete_enumerated_smoothing(
    model: DiscreteHmm,
    observations: np.ndarray,
    functional: AdditiveFunctional,
    n: int | None = None,
) -> float:
    """The same quantity by exhaustive summation over all state paths; only
    viable for tiny instances, and kept as the independent cross-check."""
    zs = np.asarray(observations, dtype=np.intp)
    if n is None:
        n = zs.shape[0] - 1
    initial = model.initial_distribution()
    grid = np.arange(model.n_states, dtype=float)
    total_weight = 0.0
    total_value = 0.0
    for path in itertools.product(range(model.n_states), repeat=n + 1):
        weight = initial[path[0]]
        value = 0.0
        for m in range(n):
            weight *= model.emission[path[m], zs[m]] * model.transition[path[m], path[m + 1]]
            value += float(
                functional.term(m)(
                    np.array([grid[path[m]]]), np.array([grid[path[m + 1]]])
                )
            )
        total_weight += weight
        total_value += weight * value
    if total_weight <= 0:
        raise ArithmeticError("zero-probability observation record")
    return total_value / total_weight
