"""Readers for the experiment harness's delimited outputs.

This package talks to the harness only through its published file formats;
it never recomputes estimates, only renders what the CSVs contain.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Optional

import numpy as np
import pandas as pd

RECORD_COLUMNS = [
    "config_hash", "model", "n", "estimator", "N", "M", "k", "k0",
    "mode", "replicate", "seed", "estimate", "exact", "runtime_ms",
]
ITERATION_COLUMNS = ["config_hash", "replicate", "ell", "estimate"]
FIT_COLUMNS = ["config_hash", "N", "a", "b"]


class InputFormatError(ValueError):
    pass


def _read_checked(paths: Iterable[Path | str], expected: list[str]) -> pd.DataFrame:
    frames = []
    for path in paths:
        frame = pd.read_csv(path)
        if list(frame.columns) != expected:
            raise InputFormatError(
                f"{path}: expected columns {expected}, found {list(frame.columns)}"
            )
        frames.append(frame)
    if not frames:
        raise InputFormatError("no input CSVs given")
    return pd.concat(frames, ignore_index=True)


def load_records(paths: Iterable[Path | str]) -> pd.DataFrame:
    records = _read_checked(paths, RECORD_COLUMNS)
    if records["exact"].isna().any():
        raise InputFormatError("records are missing exact reference values")
    return records


def load_iterations(paths: Iterable[Path | str]) -> pd.DataFrame:
    return _read_checked(paths, ITERATION_COLUMNS)


def load_fits(path: Path | str) -> pd.DataFrame:
    return _read_checked([path], FIT_COLUMNS)


def fit_log_bias_line(points: list[tuple[float, float]]) -> tuple[float, float]:
    """Least squares of log|bias| on the iteration index, identical to the
    harness's own fit, for when no fit CSV accompanies the records."""
    usable = [(k, abs(b)) for k, b in points if abs(b) > 0]
    if len(usable) < 2:
        raise InputFormatError("need at least two nonzero-bias points to fit")
    ks = np.array([k for k, _ in usable], dtype=float)
    logs = np.log([b for _, b in usable])
    design = np.stack([ks, np.ones_like(ks)], axis=1)
    coef, *_ = np.linalg.lstsq(design, logs, rcond=None)
    return float(coef[0]), float(coef[1])


def check_hashes_present(frame: pd.DataFrame, hashes: Optional[list[str]]) -> None:
    if not hashes:
        return
    present = set(frame["config_hash"].unique())
    missing = [h for h in hashes if h not in present]
    if missing:
        raise InputFormatError(f"config hashes not found in inputs: {missing}")
