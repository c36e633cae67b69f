"""Command-line entry point binding JSON experiment configs to library runs.

Subcommands: simulate, run, sweep, oracle, bounds.  Configs carry a
versioned ``schema`` field and unknown keys are rejected so typos in
experiment grids fail fast.  Output location precedence: --outdir flag,
then the PARISGIBBS_OUTDIR environment variable, then the working
directory.  On failure a machine-readable error JSON is printed to stdout
and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .bench import (
    ExperimentConfig,
    build_functional,
    build_model,
    config_digest,
    evaluate_bounds,
    exact_value,
    run_experiment,
    write_iterations_csv,
    write_manifest,
    write_records_csv,
)
from .core import UnsupportedModelError
from .models import as_feynman_kac, read_observations, simulate, write_observations

SCHEMA_VERSION = 1

OUTDIR_ENV = "PARISGIBBS_OUTDIR"


class ConfigError(ValueError):
    pass


def _load_config(path, required: set[str], optional: set[str]) -> dict:
    try:
        with open(path) as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    if config.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"config schema must be {SCHEMA_VERSION}")
    keys = set(config) - {"schema"}
    unknown = keys - required - optional
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = required - keys
    if missing:
        raise ConfigError(f"missing config keys: {sorted(missing)}")
    return config


def _outdir(args) -> Path:
    if args.outdir is not None:
        path = Path(args.outdir)
    else:
        path = Path(os.environ.get(OUTDIR_ENV, "."))
    path.mkdir(parents=True, exist_ok=True)
    return path


def _resolve_observations(config: dict, config_path) -> np.ndarray:
    obs_path = Path(config["observations"])
    if not obs_path.is_absolute():
        obs_path = Path(config_path).parent / obs_path
    return read_observations(obs_path)


def cmd_simulate(args) -> int:
    config = _load_config(
        args.config, required={"model", "params", "n", "seed"}, optional={"output"}
    )
    seed = args.seed if args.seed is not None else config["seed"]
    model = build_model(config["model"], config["params"])
    _, observations = simulate(model, config["n"], np.random.default_rng(seed))
    out = _outdir(args) / config.get("output", "observations.csv")
    write_observations(out, observations)
    print(json.dumps({"written": str(out), "rows": len(observations), "seed": seed}))
    return 0


_RUN_REQUIRED = {"model", "params", "observations", "n", "estimator", "N", "replicates", "base_seed"}
_RUN_OPTIONAL = {"M", "k", "k0", "mode", "exact", "budget", "budget_convention", "ppg_init"}


def _experiment_config(config: dict, config_path, *, N, k, M, base_seed) -> ExperimentConfig:
    return ExperimentConfig(
        model=config["model"],
        model_params=config["params"],
        observations=_resolve_observations(config, config_path),
        n=config["n"],
        estimator=config["estimator"],
        N=N,
        replicates=config["replicates"],
        base_seed=base_seed,
        M=M,
        k=k,
        k0=config.get("k0") if k is not None else None,
        mode=config.get("mode", "ar"),
        budget=config.get("budget"),
        budget_convention=config.get("budget_convention", "Nk"),
        exact_override=config.get("exact"),
        ppg_init=config.get("ppg_init", "ffbsi"),
    )


def _run_one(config: ExperimentConfig, outdir: Path, n_jobs: int) -> dict:
    digest = config_digest(config)
    records = run_experiment(config, n_jobs=n_jobs)
    write_records_csv(outdir / f"{digest}.records.csv", config, records)
    if config.estimator == "ppg":
        write_iterations_csv(outdir / f"{digest}.iterations.csv", records)
    write_manifest(outdir / f"{digest}.manifest.json", config)
    return {"config_hash": digest, "records": len(records)}


def cmd_run(args) -> int:
    config = _load_config(args.config, required=_RUN_REQUIRED, optional=_RUN_OPTIONAL)
    base_seed = args.seed if args.seed is not None else config["base_seed"]
    exp = _experiment_config(
        config,
        args.config,
        N=config["N"],
        k=config.get("k"),
        M=config.get("M", 2) if config["estimator"] != "ffbsm" else None,
        base_seed=base_seed,
    )
    result = _run_one(exp, _outdir(args), args.threads)
    print(json.dumps({"runs": [result]}))
    return 0


def cmd_sweep(args) -> int:
    config = _load_config(args.config, required=_RUN_REQUIRED, optional=_RUN_OPTIONAL)
    base_seed = args.seed if args.seed is not None else config["base_seed"]

    def as_grid(value, default=None):
        if value is None:
            return [default]
        return list(value) if isinstance(value, list) else [value]

    n_grid = as_grid(config["N"])
    budget = config.get("budget")
    if config["estimator"] == "ppg" and "k" not in config and budget is not None:
        k_grid = None  # derive k from the pinned budget per N
    else:
        k_grid = as_grid(config.get("k"))
    m_grid = as_grid(config.get("M", 2 if config["estimator"] != "ffbsm" else None))

    outdir = _outdir(args)
    results = []
    for N in n_grid:
        ks = k_grid
        if ks is None:
            if budget % N != 0:
                raise ConfigError(f"budget {budget} is not divisible by N={N}")
            ks = [budget // N]
        for k in ks:
            for M in m_grid:
                exp = _experiment_config(
                    config, args.config, N=N, k=k, M=M, base_seed=base_seed
                )
                results.append(_run_one(exp, outdir, args.threads))
    print(json.dumps({"runs": results}))
    return 0


def cmd_oracle(args) -> int:
    config = _load_config(
        args.config,
        required={"model", "params", "observations", "n"},
        optional={"functional"},
    )
    functional = config.get("functional", "one_lag")
    exp = ExperimentConfig(
        model=config["model"],
        model_params=config["params"],
        observations=_resolve_observations(config, args.config),
        n=config["n"],
        estimator="paris",
        N=1,
        replicates=1,
        base_seed=0,
        functional=functional,
    )
    value = exact_value(exp)
    out = {"model": config["model"], "n": config["n"], "functional": functional, "exact": value}
    outdir = _outdir(args)
    with open(outdir / "oracle.json", "w") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(out))
    return 0


def cmd_bounds(args) -> int:
    config = _load_config(
        args.config,
        required={"model", "params", "observations", "n", "N", "ell"},
        optional={"constant"},
    )
    model = build_model(config["model"], config["params"])
    observations = _resolve_observations(config, args.config)
    fk = as_feynman_kac(model, observations)
    exp = ExperimentConfig(
        model=config["model"],
        model_params=config["params"],
        observations=observations,
        n=config["n"],
        estimator="paris",
        N=max(int(config["N"]), 1),
        replicates=1,
        base_seed=0,
    )
    functional = build_functional(exp, model)
    ells = config["ell"] if isinstance(config["ell"], list) else [config["ell"]]
    rows = [
        {"ell": ell, **evaluate_bounds(
            fk, functional, config["n"], config["N"], ell,
            constant=config.get("constant", 1.0),
        )}
        for ell in ells
    ]
    out = {"model": config["model"], "n": config["n"], "N": config["N"], "bounds": rows}
    outdir = _outdir(args)
    with open(outdir / "bounds.json", "w") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(out))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parisgibbs",
        description="Particle smoothing experiments: simulate records, run "
        "estimator grids, query exact oracles and theoretical bounds.",
    )
    parser.add_argument("--outdir", help="output directory (default: $PARISGIBBS_OUTDIR or .)")
    parser.add_argument("--seed", type=int, help="override the seed in the config")
    parser.add_argument(
        "--threads", type=int, default=os.cpu_count() or 1,
        help="replicate parallelism; 1 forces sequential execution",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("simulate", cmd_simulate),
        ("run", cmd_run),
        ("sweep", cmd_sweep),
        ("oracle", cmd_oracle),
        ("bounds", cmd_bounds),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.set_defaults(handler=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigError, ValueError, UnsupportedModelError, KeyError, OSError) as exc:
        print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}))
        return 2
    except Exception as exc:  # runtime failure inside a run
        print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}))
        return 1


if __name__ == "__main__":
    sys.exit(main())
