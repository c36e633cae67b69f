"""Concrete state-space models and their Feynman-Kac wrappers.

The scalar linear-Gaussian and stochastic-volatility models drive the
benchmark experiments; the finite discrete HMM exists because every
quantity of interest can be computed exactly on it, which makes it the
workhorse of the oracle tests.

Conventions: an observation record of length n+1 supports runs up to
horizon n, where the potential at time m is the likelihood of the m-th
observation.  The state at a horizon's final time index is propagated but
never reweighted, so the smoothing target conditions on observations
0..n-1; the exact oracles follow the same convention.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import AdditiveFunctional, FeynmanKacModel, MixingBounds

_LOG_2PI = float(np.log(2.0 * np.pi))


def _gauss_logpdf(x, mean, sd):
    z = (x - mean) / sd
    return -0.5 * z * z - np.log(sd) - 0.5 * _LOG_2PI


def _scalar_product_term(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return x[..., 0] * y[..., 0]


def one_lag_functional(n: int) -> AdditiveFunctional:
    """State one-lag covariance functional sum_m x_m * x_{m+1} for scalar
    continuous-state models; unbounded, so no sup norms are declared."""
    return AdditiveFunctional(terms=(_scalar_product_term,) * n)


@dataclass(frozen=True)
class Lgssm:
    """Scalar linear-Gaussian state-space model.

    State: x' = state_coef * x + state_noise * eps.
    Observation: z = obs_coef * x + obs_noise * zeta.
    The initial law is the stationary state distribution, which requires
    |state_coef| < 1.
    """

    state_coef: float = 0.97
    state_noise: float = 0.60
    obs_coef: float = 0.54
    obs_noise: float = 0.33

    def __post_init__(self):
        if abs(self.state_coef) >= 1:
            raise ValueError("stationary initialization requires |state_coef| < 1")
        if self.state_noise <= 0 or self.obs_noise <= 0:
            raise ValueError("noise scales must be positive")

    @property
    def stationary_sd(self) -> float:
        return self.state_noise / np.sqrt(1.0 - self.state_coef**2)

    def simulate(self, n: int, rng: np.random.Generator):
        """A state path and observation record of length n+1."""
        if n < 0:
            raise ValueError("n must be >= 0")
        states = np.empty(n + 1)
        states[0] = rng.normal(0.0, self.stationary_sd)
        for m in range(n):
            states[m + 1] = self.state_coef * states[m] + self.state_noise * rng.normal()
        observations = self.obs_coef * states + self.obs_noise * rng.normal(size=n + 1)
        return states, observations

    def feynman_kac(self, observations: np.ndarray) -> "LgssmFeynmanKac":
        return LgssmFeynmanKac(self, np.asarray(observations, dtype=float))


class LgssmFeynmanKac(FeynmanKacModel):
    def __init__(self, model: Lgssm, observations: np.ndarray):
        self.model = model
        self.observations = observations

    @property
    def state_dim(self) -> int:
        return 1

    def sample_initial(self, rng, size):
        return rng.normal(0.0, self.model.stationary_sd, size=(size, 1))

    def sample_mutation(self, rng, m, x):
        mean = self.model.state_coef * x
        return mean + self.model.state_noise * rng.standard_normal(x.shape)

    def log_transition_density(self, m, x, x_next):
        return _gauss_logpdf(
            x_next[..., 0], self.model.state_coef * x[..., 0], self.model.state_noise
        )

    def log_potential(self, m, x):
        return _gauss_logpdf(
            self.observations[m], self.model.obs_coef * x[..., 0], self.model.obs_noise
        )

    def transition_density_upper(self, m):
        # Gaussian density peak; the lower bound is 0 on the real line, so
        # no mixing bounds are exposed.
        return 1.0 / (np.sqrt(2.0 * np.pi) * self.model.state_noise)


@dataclass(frozen=True)
class StochVol:
    """Scalar stochastic-volatility model: AR(1) log-volatility with
    observations z = scale * exp(x / 2) * zeta."""

    persistence: float = 0.975
    vol_noise: float = 0.16
    scale: float = 0.63

    def __post_init__(self):
        if abs(self.persistence) >= 1:
            raise ValueError("stationary initialization requires |persistence| < 1")
        if self.vol_noise <= 0 or self.scale <= 0:
            raise ValueError("vol_noise and scale must be positive")

    @property
    def stationary_sd(self) -> float:
        return self.vol_noise / np.sqrt(1.0 - self.persistence**2)

    def simulate(self, n: int, rng: np.random.Generator):
        if n < 0:
            raise ValueError("n must be >= 0")
        states = np.empty(n + 1)
        states[0] = rng.normal(0.0, self.stationary_sd)
        for m in range(n):
            states[m + 1] = self.persistence * states[m] + self.vol_noise * rng.normal()
        observations = self.scale * np.exp(states / 2.0) * rng.normal(size=n + 1)
        return states, observations

    def feynman_kac(self, observations: np.ndarray) -> "StochVolFeynmanKac":
        return StochVolFeynmanKac(self, np.asarray(observations, dtype=float))


class StochVolFeynmanKac(FeynmanKacModel):
    def __init__(self, model: StochVol, observations: np.ndarray):
        self.model = model
        self.observations = observations

    @property
    def state_dim(self) -> int:
        return 1

    def sample_initial(self, rng, size):
        return rng.normal(0.0, self.model.stationary_sd, size=(size, 1))

    def sample_mutation(self, rng, m, x):
        return self.model.persistence * x + self.model.vol_noise * rng.standard_normal(
            x.shape
        )

    def log_transition_density(self, m, x, x_next):
        return _gauss_logpdf(
            x_next[..., 0], self.model.persistence * x[..., 0], self.model.vol_noise
        )

    def log_potential(self, m, x):
        # N(z; 0, scale^2 * exp(x)) evaluated in log domain: raw densities
        # underflow for long records.
        sd_log = np.log(self.model.scale) + 0.5 * x[..., 0]
        z = self.observations[m] * np.exp(-sd_log)
        return -0.5 * z * z - sd_log - 0.5 * _LOG_2PI

    def transition_density_upper(self, m):
        return 1.0 / (np.sqrt(2.0 * np.pi) * self.model.vol_noise)


@dataclass(frozen=True)
class DiscreteHmm:
    """Finite HMM with strictly positive transition and emission matrices,
    so the strong-mixing constants are finite and computable.

    States are exchanged with the generic machinery as state-index vectors
    of dimension one; ``values`` maps indices to the reals the additive
    functionals consume.
    """

    transition: np.ndarray          # (S, S)
    emission: np.ndarray            # (S, O)
    values: np.ndarray              # (S,)
    initial: Optional[np.ndarray] = None  # (S,), uniform when omitted

    def __post_init__(self):
        t = np.asarray(self.transition, dtype=float)
        e = np.asarray(self.emission, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise ValueError("transition must be square")
        if e.ndim != 2 or e.shape[0] != t.shape[0]:
            raise ValueError("emission must have one row per state")
        if v.shape != (t.shape[0],):
            raise ValueError("values must have one entry per state")
        if np.any(t <= 0) or np.any(e <= 0):
            raise ValueError("transition and emission entries must be positive")
        if np.max(np.abs(t.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("transition rows must sum to 1")
        if np.max(np.abs(e.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("emission rows must sum to 1")
        init = self.initial
        if init is not None:
            init = np.asarray(init, dtype=float)
            if init.shape != (t.shape[0],) or np.any(init < 0):
                raise ValueError("initial must be a distribution over states")
            if abs(init.sum() - 1.0) > 1e-12:
                raise ValueError("initial must sum to 1")
            object.__setattr__(self, "initial", init)
        object.__setattr__(self, "transition", t)
        object.__setattr__(self, "emission", e)
        object.__setattr__(self, "values", v)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    def initial_distribution(self) -> np.ndarray:
        if self.initial is None:
            return np.full(self.n_states, 1.0 / self.n_states)
        return self.initial

    def simulate(self, n: int, rng: np.random.Generator):
        if n < 0:
            raise ValueError("n must be >= 0")
        states = np.empty(n + 1, dtype=np.intp)
        states[0] = rng.choice(self.n_states, p=self.initial_distribution())
        for m in range(n):
            states[m + 1] = rng.choice(self.n_states, p=self.transition[states[m]])
        observations = np.array(
            [rng.choice(self.emission.shape[1], p=self.emission[s]) for s in states],
            dtype=np.intp,
        )
        return states, observations

    def one_lag_functional(self, n: int) -> AdditiveFunctional:
        """Products of state values along consecutive pairs, with the sup
        norms this bounded model supports."""
        values = self.values

        def term(x: np.ndarray, y: np.ndarray) -> np.ndarray:
            return (
                values[x[..., 0].astype(np.intp)] * values[y[..., 0].astype(np.intp)]
            )

        sup = float(np.max(np.abs(values)) ** 2)
        return AdditiveFunctional(terms=(term,) * n, sup_norms=(sup,) * n)

    def feynman_kac(self, observations: np.ndarray) -> "DiscreteHmmFeynmanKac":
        return DiscreteHmmFeynmanKac(self, np.asarray(observations, dtype=np.intp))


class DiscreteHmmFeynmanKac(FeynmanKacModel):
    def __init__(self, model: DiscreteHmm, observations: np.ndarray):
        self.model = model
        self.observations = observations
        self._log_transition = np.log(model.transition)
        self._log_emission = np.log(model.emission)
        self._cum_transition = np.minimum(np.cumsum(model.transition, axis=1), 1.0)

    @property
    def state_dim(self) -> int:
        return 1

    def sample_initial(self, rng, size):
        idx = rng.choice(self.model.n_states, size=size, p=self.model.initial_distribution())
        return idx.astype(float)[:, None]

    def sample_mutation(self, rng, m, x):
        rows = self._cum_transition[x[..., 0].astype(np.intp)]
        u = rng.random(rows.shape[:-1])
        idx = np.sum(rows < u[..., None], axis=-1)
        return np.minimum(idx, self.model.n_states - 1).astype(float)[..., None]

    def log_transition_density(self, m, x, x_next):
        xi = x[..., 0]
        yi = x_next[..., 0]
        if (
            xi.ndim == 2
            and yi.ndim == 2
            and xi.shape[0] == 1
            and yi.shape[1] == 1
        ):
            # Outer source-by-target grid (the pairwise-update pattern):
            # gathering through a (targets, S) panel keeps the lookup table
            # cache-resident, ~3x faster than a broadcast double index.
            panel = self._log_transition.T[yi[:, 0].astype(np.intp)]
            return np.take(panel, xi[0].astype(np.intp), axis=1)
        return self._log_transition[xi.astype(np.intp), yi.astype(np.intp)]

    def log_potential(self, m, x):
        return self._log_emission[x[..., 0].astype(np.intp), self.observations[m]]

    def transition_density_upper(self, m):
        return float(np.max(self.model.transition))

    def mixing_bounds(self, m):
        column = self.model.emission[:, self.observations[m]]
        return MixingBounds(
            potential_low=float(np.min(column)),
            potential_high=float(np.max(column)),
            transition_low=float(np.min(self.model.transition)),
        )


def simulate(model, n: int, rng: np.random.Generator):
    """Draw (states, observations) of length n+1 from the generative model."""
    return model.simulate(n, rng)


def as_feynman_kac(model, observations) -> FeynmanKacModel:
    """Bind a model to a fixed observation record, yielding the sequence of
    mutation kernels and observation-likelihood potentials."""
    return model.feynman_kac(observations)


def write_observations(path, observations) -> None:
    """Persist an observation record as CSV with columns m,z so every run
    against a given record replays the identical data."""
    observations = np.asarray(observations)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["m", "z"])
        for m, z in enumerate(observations):
            writer.writerow([m, repr(float(z)) if not float(z).is_integer() else int(z)])


def read_observations(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["m", "z"]:
            raise ValueError(f"unexpected observation CSV header: {header}")
        rows = [(int(m), float(z)) for m, z in reader]
    rows.sort(key=lambda mz: mz[0])
    if [m for m, _ in rows] != list(range(len(rows))):
        raise ValueError("observation CSV must cover times 0..n without gaps")
    return np.array([z for _, z in rows])
