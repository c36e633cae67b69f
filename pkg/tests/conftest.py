"""Shared fixtures and independent brute-force oracles.

The oracles here are deliberately written against the math, not the
library: a dense joint-Gaussian construction for the linear-Gaussian
model and plain-numpy backward probabilities for discrete clouds.  They
cross-check the production implementations.
"""

import numpy as np
import pytest

from parisgibbs.models import DiscreteHmm, Lgssm
from parisgibbs.smc import ParticleCloud

_ACCEPTANCE_LINES: list[str] = []


def record_acceptance(name: str, passed: bool, seconds: float, detail: str = "") -> None:
    """Collect one acceptance-criterion verdict for the terminal summary."""
    status = "PASS" if passed else "FAIL"
    suffix = f"  [{detail}]" if detail else ""
    _ACCEPTANCE_LINES.append(f"[{status}] {name}  ({seconds:.1f}s){suffix}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def lgssm():
    return Lgssm()


@pytest.fixture
def small_hmm():
    return DiscreteHmm(
        transition=np.array([[0.70, 0.20, 0.10], [0.15, 0.70, 0.15], [0.10, 0.30, 0.60]]),
        emission=np.array([[0.80, 0.10, 0.10], [0.10, 0.80, 0.10], [0.20, 0.20, 0.60]]),
        values=np.array([-1.0, 0.5, 2.0]),
    )


def dense_gaussian_smoothing(model: Lgssm, observations: np.ndarray):
    """Smoothing moments by building the full (n+1)-dimensional joint
    precision of the states given the observations and inverting it.
    NaN observations contribute no likelihood term."""
    zs = np.asarray(observations, dtype=float)
    n = zs.shape[0] - 1
    a, q = model.state_coef, model.state_noise
    b, r = model.obs_coef, model.obs_noise
    prior_var = model.stationary_sd**2
    precision = np.zeros((n + 1, n + 1))
    linear = np.zeros(n + 1)
    precision[0, 0] += 1.0 / prior_var
    for m in range(n):
        precision[m, m] += a * a / (q * q)
        precision[m + 1, m + 1] += 1.0 / (q * q)
        precision[m, m + 1] -= a / (q * q)
        precision[m + 1, m] -= a / (q * q)
    for m in range(n + 1):
        if not np.isnan(zs[m]):
            precision[m, m] += b * b / (r * r)
            linear[m] += b * zs[m] / (r * r)
    cov = np.linalg.inv(precision)
    mean = cov @ linear
    return mean, cov


def manual_backward_probabilities(
    hmm: DiscreteHmm, observation: int, cloud_states: np.ndarray, target_state: int
) -> np.ndarray:
    """Backward probabilities over a discrete cloud by direct table math:
    emission[s, z] * transition[s, s'] normalized over the cloud."""
    weights = np.array(
        [
            hmm.emission[s, observation] * hmm.transition[s, target_state]
            for s in cloud_states
        ]
    )
    return weights / weights.sum()


def make_hmm_cloud(hmm: DiscreteHmm, observations, time: int, states) -> ParticleCloud:
    """A frozen discrete-HMM cloud at the given time from explicit states."""
    fk = hmm.feynman_kac(observations)
    positions = np.asarray(states, dtype=float)[:, None]
    return ParticleCloud(
        time=time,
        positions=positions,
        log_potentials=np.asarray(fk.log_potential(time, positions), dtype=float),
    )
