"""Experiment orchestration: replicate farms over the estimators, exact
references, bias/variance/MSE aggregation, exponential bias-decay fits,
theoretical bound shapes, and step-time probes for the complexity checks.

Determinism contract: replicate r of a config draws its random stream from
(base seed, config digest, r), so results do not depend on scheduling or
worker count.  Estimates and seeds are bit-reproducible; runtimes are
wall-clock measurements and naturally vary between runs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.stats

from . import __version__
from .core import (
    AdditiveFunctional,
    FeynmanKacModel,
    Trajectory,
    UnsupportedModelError,
    kappa_from_rho,
    mixing_constant_rho,
)
from .models import DiscreteHmm, Lgssm, StochVol, as_feynman_kac, one_lag_functional
from .oracles import discrete_exact_smoothing, lgssm_one_lag_reference
from .paris import paris_init, paris_step, run_ffbsm, run_paris
from .backward import ffbsm_forward_update
from .ppg import default_init_path, run_ppg
from .smc import init_cloud, propagate

ESTIMATORS = ("paris", "ffbsm", "ppg")
MODEL_NAMES = ("lgssm", "stochvol", "discrete_hmm")
BUDGET_CONVENTIONS = ("Nk", "(N-1)k")

RECORD_HEADER = [
    "config_hash", "model", "n", "estimator", "N", "M", "k", "k0",
    "mode", "replicate", "seed", "estimate", "exact", "runtime_ms",
]
ITERATION_HEADER = ["config_hash", "replicate", "ell", "estimate"]
FIT_HEADER = ["config_hash", "N", "a", "b"]


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment cell: a model bound to a fixed observation record, an
    estimator, and its tuning.  k/k0 only apply to the ppg estimator."""

    model: str
    model_params: dict
    observations: np.ndarray
    n: int
    estimator: str
    N: int
    replicates: int
    base_seed: int
    M: Optional[int] = 2
    k: Optional[int] = None
    k0: Optional[int] = None
    mode: str = "ar"
    budget: Optional[int] = None
    budget_convention: str = "Nk"
    functional: str = "one_lag"
    exact_override: Optional[float] = None
    # Chain start for ppg.  "ffbsi" is the production default; "zeros" and
    # "observations" start deliberately off target, which is what makes the
    # forgetting of the initial path measurable (the bias bound is uniform
    # over starts).
    ppg_init: str = "ffbsi"

    def __post_init__(self):
        if self.model not in MODEL_NAMES:
            raise ValueError(f"unknown model {self.model!r}")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.mode not in ("ar", "exact"):
            raise ValueError(f"unknown backward mode {self.mode!r}")
        if self.budget_convention not in BUDGET_CONVENTIONS:
            raise ValueError(f"unknown budget convention {self.budget_convention!r}")
        if self.functional != "one_lag":
            raise ValueError(f"unknown functional {self.functional!r}")
        if self.n < 0 or self.N < 1 or self.replicates < 1:
            raise ValueError("n, N and replicates must be positive")
        if np.asarray(self.observations).shape[0] < self.n + 1:
            raise ValueError("observation record must cover times 0..n")
        if self.ppg_init not in ("ffbsi", "zeros", "observations"):
            raise ValueError(f"unknown ppg_init {self.ppg_init!r}")
        if self.estimator == "ppg":
            if self.k is None or self.k0 is None:
                raise ValueError("ppg requires k and k0")
            if not 0 <= self.k0 < self.k:
                raise ValueError("need 0 <= k0 < k")
            if self.budget is not None:
                used = self.N * self.k if self.budget_convention == "Nk" else (self.N - 1) * self.k
                if used != self.budget:
                    raise ValueError(
                        f"budget mismatch: convention {self.budget_convention} "
                        f"gives {used}, config pins {self.budget}"
                    )
        elif self.k is not None or self.k0 is not None:
            raise ValueError("k/k0 only apply to the ppg estimator")


@dataclass(frozen=True)
class ExperimentRecord:
    """One replicate's outcome."""

    config_hash: str
    replicate: int
    seed: int
    estimate: float
    exact: float
    runtime_ms: float
    per_iteration: Optional[tuple[float, ...]] = None


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def config_digest(config: ExperimentConfig) -> str:
    """Stable hex digest of the full config including the observation
    record; names experiment outputs and seeds the replicate streams."""
    payload = asdict(config)
    payload["observations"] = hashlib.sha256(
        np.ascontiguousarray(np.asarray(config.observations, dtype=float)).tobytes()
    ).hexdigest()
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def build_model(name: str, params: dict):
    cls = {"lgssm": Lgssm, "stochvol": StochVol, "discrete_hmm": DiscreteHmm}[name]
    return cls(**params)


def build_functional(config: ExperimentConfig, model) -> AdditiveFunctional:
    if isinstance(model, DiscreteHmm):
        return model.one_lag_functional(config.n)
    return one_lag_functional(config.n)


def exact_value(config: ExperimentConfig) -> float:
    """The reference the estimator is compared against: closed form for the
    linear-Gaussian model, dynamic programming for the discrete HMM, and a
    caller-pinned reference elsewhere (the volatility model has no exact
    oracle; its reference is a high-particle-count smoother run)."""
    if config.exact_override is not None:
        return float(config.exact_override)
    model = build_model(config.model, config.model_params)
    if config.model == "lgssm":
        return lgssm_one_lag_reference(model, config.observations, config.n)
    if config.model == "discrete_hmm":
        return discrete_exact_smoothing(
            model, config.observations, build_functional(config, model), config.n
        )
    raise UnsupportedModelError(
        f"no exact oracle for model {config.model!r}; supply exact_override "
        "from a pinned reference run"
    )


def replicate_seed(base_seed: int, digest: str, replicate: int) -> int:
    blob = f"{base_seed}:{digest}:{replicate}".encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big")


def _ppg_start(config: ExperimentConfig, fk, rng) -> Trajectory:
    if config.ppg_init == "zeros":
        return Trajectory(states=np.zeros((config.n + 1, 1)))
    if config.ppg_init == "observations":
        model = build_model(config.model, config.model_params)
        scale = getattr(model, "obs_coef", 1.0)
        states = np.asarray(config.observations, dtype=float)[: config.n + 1] / scale
        return Trajectory(states=states[:, None])
    return default_init_path(fk, config.n, config.N, rng, mode=config.mode)


def _run_replicate(config: ExperimentConfig, digest: str, exact: float, replicate: int) -> ExperimentRecord:
    model = build_model(config.model, config.model_params)
    fk = as_feynman_kac(model, config.observations)
    functional = build_functional(config, model)
    seed = replicate_seed(config.base_seed, digest, replicate)
    rng = np.random.default_rng(seed)
    per_iteration = None
    start = time.perf_counter()
    if config.estimator == "paris":
        estimate = run_paris(fk, functional, config.n, config.N, rng, M=config.M, mode=config.mode)
    elif config.estimator == "ffbsm":
        estimate = run_ffbsm(fk, functional, config.n, config.N, rng)
    else:
        init = _ppg_start(config, fk, rng)
        run = run_ppg(
            fk, functional, config.n, config.N, config.k, config.k0, init, rng,
            M=config.M, mode=config.mode,
        )
        estimate = run.rollout
        per_iteration = tuple(float(v) for v in run.per_iteration)
    runtime_ms = (time.perf_counter() - start) * 1e3
    return ExperimentRecord(
        config_hash=digest,
        replicate=replicate,
        seed=seed,
        estimate=float(estimate),
        exact=exact,
        runtime_ms=runtime_ms,
        per_iteration=per_iteration,
    )


def run_experiment(config: ExperimentConfig, n_jobs: int = 1) -> list[ExperimentRecord]:
    """All replicates of one config, in replicate order.  Replicates are
    independent given their derived seeds, so any worker count produces the
    same estimates."""
    digest = config_digest(config)
    exact = exact_value(config)
    replicates = range(config.replicates)
    if n_jobs == 1:
        return [_run_replicate(config, digest, exact, r) for r in replicates]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        futures = [pool.submit(_run_replicate, config, digest, exact, r) for r in replicates]
        return [f.result() for f in futures]


def aggregate(records: Sequence[ExperimentRecord]) -> dict:
    """Bias, variance, MSE, the standard error of the mean estimate, and
    mean runtime over a record batch sharing one exact reference."""
    if not records:
        raise ValueError("no records to aggregate")
    estimates = np.array([r.estimate for r in records])
    exact = records[0].exact
    errors = estimates - exact
    return {
        "bias": float(np.mean(errors)),
        "variance": float(np.var(estimates)),
        "mse": float(np.mean(errors**2)),
        "stderr": float(np.std(estimates, ddof=1) / np.sqrt(len(estimates))) if len(estimates) > 1 else 0.0,
        "mean_runtime_ms": float(np.mean([r.runtime_ms for r in records])),
    }


@dataclass(frozen=True)
class DecayFit:
    """Least-squares fit of log|bias| against the iteration index."""

    slope: float
    intercept: float
    slope_stderr: float
    n_points: int

    def slope_confidence(self, level: float = 0.95) -> tuple[float, float]:
        if self.n_points < 3:
            return (-np.inf, np.inf)
        half = scipy.stats.t.ppf(0.5 + level / 2, self.n_points - 2) * self.slope_stderr
        return (self.slope - half, self.slope + half)


def fit_exponential_decay_detail(points: Sequence[tuple[float, float]]) -> DecayFit:
    """Fit bias ~ exp(a*k + b) by least squares on (k, log|bias|)."""
    pts = [(k, abs(b)) for k, b in points if abs(b) > 0]
    if len(pts) < 2:
        raise ValueError("need at least two points with nonzero bias")
    ks = np.array([k for k, _ in pts], dtype=float)
    logs = np.log([b for _, b in pts])
    design = np.stack([ks, np.ones_like(ks)], axis=1)
    coef, residual, *_ = np.linalg.lstsq(design, logs, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    dof = len(pts) - 2
    if dof > 0:
        rss = float(residual[0]) if residual.size else float(np.sum((design @ coef - logs) ** 2))
        stderr = np.sqrt(rss / dof / np.sum((ks - ks.mean()) ** 2))
    else:
        stderr = np.inf
    return DecayFit(slope=slope, intercept=intercept, slope_stderr=float(stderr), n_points=len(pts))


def fit_exponential_decay(points: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """(a, b) of the exp(a*k + b) bias-decay fit."""
    fit = fit_exponential_decay_detail(points)
    return fit.slope, fit.intercept


def evaluate_bounds(
    fk_model: FeynmanKacModel,
    functional: AdditiveFunctional,
    n: int,
    N: int,
    ell: int,
    constant: float = 1.0,
) -> dict:
    """Shapes of the iteration-ell bias bound and the MSE bound, up to the
    caller-supplied constant (the proof constants are not computable from
    their statement): bias ~ sum||terms|| * kappa^ell / N and
    mse ~ (sum||terms||)^2 / N."""
    rho = mixing_constant_rho(fk_model, n)
    rate = kappa_from_rho(rho, n, N)
    weight = functional.sup_norm_total(n)
    return {
        "rho": rho,
        "kappa": rate,
        "bias_bound": constant * weight * rate**ell / N,
        "mse_bound": constant * weight**2 / N,
    }


# ---------------------------------------------------------------------------
# Step-time probes for the complexity acceptance check
# ---------------------------------------------------------------------------


def measure_paris_step_times(
    fk: FeynmanKacModel,
    functional: AdditiveFunctional,
    N: int,
    steps: int,
    rng: np.random.Generator,
    M: int = 2,
    mode: str = "ar",
) -> np.ndarray:
    """Wall-clock seconds of each of ``steps`` online-smoother updates."""
    state = paris_init(fk, N, rng)
    times = np.empty(steps)
    for m in range(steps):
        start = time.perf_counter()
        state = paris_step(fk, functional.term(m), state, M, rng, mode=mode)
        times[m] = time.perf_counter() - start
    return times


def measure_ffbsm_update_times(
    fk: FeynmanKacModel,
    functional: AdditiveFunctional,
    N: int,
    steps: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Wall-clock seconds of each of ``steps`` quadratic statistic updates,
    excluding the shared particle propagation."""
    cloud = init_cloud(fk, N, rng)
    stats = np.zeros(N)
    times = np.empty(steps)
    for m in range(steps):
        new_cloud = propagate(fk, cloud, rng)
        start = time.perf_counter()
        stats = ffbsm_forward_update(fk, functional.term(m), cloud, stats, new_cloud)
        times[m] = time.perf_counter() - start
        cloud = new_cloud
    return times


# ---------------------------------------------------------------------------
# External record formats
# ---------------------------------------------------------------------------


def write_records_csv(path, config: ExperimentConfig, records: Sequence[ExperimentRecord]) -> None:
    is_ppg = config.estimator == "ppg"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_HEADER)
        for rec in records:
            writer.writerow([
                rec.config_hash,
                config.model,
                config.n,
                config.estimator,
                config.N,
                "" if config.estimator == "ffbsm" else config.M,
                config.k if is_ppg else "",
                config.k0 if is_ppg else "",
                "" if config.estimator == "ffbsm" else config.mode,
                rec.replicate,
                rec.seed,
                repr(rec.estimate),
                repr(rec.exact),
                f"{rec.runtime_ms:.3f}",
            ])


def write_iterations_csv(path, records: Sequence[ExperimentRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ITERATION_HEADER)
        for rec in records:
            if rec.per_iteration is None:
                continue
            for ell, estimate in enumerate(rec.per_iteration, start=1):
                writer.writerow([rec.config_hash, rec.replicate, ell, repr(estimate)])


def write_manifest(path, config: ExperimentConfig) -> None:
    payload = asdict(config)
    payload["observations"] = [float(z) for z in np.asarray(config.observations)]
    manifest = {
        "schema": 1,
        "library_version": __version__,
        "config_hash": config_digest(config),
        "config": payload,
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def write_fits_csv(path, rows: Sequence[dict]) -> None:
    """Bias-decay fit parameters per configuration, for figure overlays:
    one row per (config_hash, N) with the exp(a*k + b) coefficients."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FIT_HEADER)
        for row in rows:
            writer.writerow([row["config_hash"], row["N"], repr(row["a"]), repr(row["b"])])


def read_records_csv(path) -> list[dict]:
    """Record rows with numeric fields parsed; empty cells become None."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RECORD_HEADER:
            raise ValueError(f"unexpected records header in {path}")
        rows = []
        for raw in reader:
            row: dict = dict(raw)
            for key in ("n", "N", "M", "k", "k0", "replicate", "seed"):
                row[key] = int(raw[key]) if raw[key] != "" else None
            for key in ("estimate", "exact", "runtime_ms"):
                row[key] = float(raw[key])
            rows.append(row)
    return rows


def read_iterations_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ITERATION_HEADER:
            raise ValueError(f"unexpected iterations header in {path}")
        return [
            {
                "config_hash": raw["config_hash"],
                "replicate": int(raw["replicate"]),
                "ell": int(raw["ell"]),
                "estimate": float(raw["estimate"]),
            }
            for raw in reader
        ]
