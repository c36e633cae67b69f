"""The two figure kinds the experiment reports use.

Bias-decay: per-iteration |bias| of the chained sampler on a log axis, one
curve per particle count, each with its exp(a*k + b) fit overlay and the
fixed-budget online-smoother reference level.

Budget boxplot: estimate distributions of the chained sampler at several
(k, N) splits of one particle budget next to the online smoother at the
full budget, with the exact value and per-box means as dashed lines.

Rendering is deterministic: fixed style, fixed SVG hash salt, no embedded
timestamps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from .data import (
    InputFormatError,
    check_hashes_present,
    fit_log_bias_line,
    load_fits,
    load_iterations,
    load_records,
)

matplotlib.rcParams["svg.hashsalt"] = "ppgfigures"
matplotlib.rcParams["svg.fonttype"] = "none"  # keep labels as literal text

_PALETTE = ["#1f77b4", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"]
_PPG_BOX_COLOR = "#ffd92f"
_PARIS_BOX_COLOR = "#a6cee3"


@dataclass(frozen=True)
class FigureSpec:
    """Inputs and destination of one figure.

    ``output`` is the image stem or a path ending in .svg/.png; both formats
    are always written.  ``config_hashes``, when given, must all be present
    in the inputs.
    """

    kind: str  # "bias_decay" | "budget_boxplot"
    records: tuple[str, ...]
    output: str
    iterations: tuple[str, ...] = ()
    fits: Optional[str] = None
    k0_label: str = "k0 = k-1"
    config_hashes: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("bias_decay", "budget_boxplot"):
            raise ValueError(f"unknown figure kind {self.kind!r}")
        if not self.records:
            raise ValueError("at least one records CSV is required")
        if self.kind == "bias_decay" and not self.iterations:
            raise ValueError("bias_decay needs the per-iteration CSVs")


@dataclass(frozen=True)
class FigureResult:
    svg_path: Path
    png_path: Path
    # The exp(a*k + b) parameters printed on a bias-decay figure, keyed by N.
    fit_parameters: dict = field(default_factory=dict)


def _output_paths(output: str) -> tuple[Path, Path]:
    path = Path(output)
    stem = path.with_suffix("") if path.suffix in (".svg", ".png") else path
    return stem.with_suffix(".svg"), stem.with_suffix(".png")


def _save(fig, output: str) -> tuple[Path, Path]:
    svg_path, png_path = _output_paths(output)
    svg_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(svg_path, metadata={"Date": None})
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return svg_path, png_path


def _format_sig(value: float, digits: int = 4) -> str:
    return f"{value:.{digits}g}"


def plot_bias_decay(spec: FigureSpec) -> FigureResult:
    """One |bias|-vs-iteration curve per particle count with its
    exponential fit, plus the full-budget online-smoother reference level.
    The fit parameters are printed on the figure and echoed in the result."""
    if spec.kind != "bias_decay":
        raise ValueError("spec is not a bias_decay spec")
    records = load_records(spec.records)
    iterations = load_iterations(spec.iterations)
    check_hashes_present(records, list(spec.config_hashes))

    fits = load_fits(spec.fits) if spec.fits else None
    ppg = records[records["estimator"] == "ppg"]
    if ppg.empty:
        raise InputFormatError("no chained-sampler records in the inputs")

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    fit_parameters: dict = {}
    for index, (color, (config_hash, cell)) in enumerate(zip(
        _PALETTE, sorted(ppg.groupby("config_hash"), key=lambda kv: kv[1]["N"].iloc[0])
    )):
        N = int(cell["N"].iloc[0])
        exact = float(cell["exact"].iloc[0])
        chain = iterations[iterations["config_hash"] == config_hash]
        if chain.empty:
            raise InputFormatError(f"no per-iteration rows for config {config_hash}")
        profile = chain.groupby("ell")["estimate"].mean().sort_index()
        bias = np.abs(profile.to_numpy() - exact)
        ells = profile.index.to_numpy(dtype=float)
        ax.plot(ells, bias, "o-", color=color, label=f"N = {N}", markersize=4)

        if fits is not None and (fits["config_hash"] == config_hash).any():
            row = fits[fits["config_hash"] == config_hash].iloc[0]
            slope, intercept = float(row["a"]), float(row["b"])
        else:
            slope, intercept = fit_log_bias_line(list(zip(ells, bias)))
        fit_parameters[N] = (slope, intercept)
        grid = np.linspace(ells.min(), ells.max(), 200)
        ax.plot(grid, np.exp(slope * grid + intercept), "--", color=color, alpha=0.7)
        ax.annotate(
            f"N={N}: a={_format_sig(slope)}, b={_format_sig(intercept)}",
            xy=(0.02, 0.04 + 0.06 * index),
            xycoords="axes fraction",
            fontsize=8,
            color=color,
        )

    paris = records[records["estimator"] == "paris"]
    if not paris.empty:
        bias = abs(paris["estimate"].mean() - float(paris["exact"].iloc[0]))
        ax.axhline(
            bias, color="#d62728", linestyle=":",
            label=f"reference smoother, N = {int(paris['N'].iloc[0])}",
        )

    ax.set_yscale("log")
    ax.set_xlabel("iteration k")
    ax.set_ylabel("|bias|")
    ax.set_title(f"Bias decay over sweeps ({spec.k0_label})")
    ax.legend(fontsize=8)
    fig.tight_layout()
    svg_path, png_path = _save(fig, spec.output)
    return FigureResult(svg_path=svg_path, png_path=png_path, fit_parameters=fit_parameters)


def plot_budget_boxplot(spec: FigureSpec) -> FigureResult:
    """Per-budget panels of estimate distributions: yellow boxes for the
    chained sampler's (k, N) splits, a blue box for the full-budget online
    smoother, the exact value as a red dashed line and each box's mean as a
    black dashed line.  Whiskers follow the 1.5 IQR convention (stated in
    the caption)."""
    if spec.kind != "budget_boxplot":
        raise ValueError("spec is not a budget_boxplot spec")
    records = load_records(spec.records)
    check_hashes_present(records, list(spec.config_hashes))

    def budget_of(row) -> int:
        if row["estimator"] == "ppg":
            return int(row["N"] * row["k"])
        return int(row["N"])

    records = records.assign(budget=records.apply(budget_of, axis=1))
    budgets = sorted(records["budget"].unique())
    fig, axes = plt.subplots(
        1, len(budgets), figsize=(3.4 * len(budgets), 4.2), squeeze=False, sharey=True
    )

    for ax, budget in zip(axes[0], budgets):
        panel = records[records["budget"] == budget]
        exact = float(panel["exact"].iloc[0])
        groups = []
        for config_hash, cell in panel.groupby("config_hash"):
            first = cell.iloc[0]
            if first["estimator"] == "ppg":
                label = f"k={int(first['k'])}\nN={int(first['N'])}"
                order = (1, int(first["k"]))
                color = _PPG_BOX_COLOR
            else:
                label = f"smoother\nN={int(first['N'])}"
                order = (0, 0)
                color = _PARIS_BOX_COLOR
            groups.append((order, label, color, cell["estimate"].to_numpy()))
        groups.sort(key=lambda g: g[0])

        boxes = ax.boxplot(
            [g[3] for g in groups],
            tick_labels=[g[1] for g in groups],
            whis=1.5,
            patch_artist=True,
            flierprops=dict(markersize=2.5, alpha=0.6),
        )
        for patch, group in zip(boxes["boxes"], groups):
            patch.set_facecolor(group[2])
        for i, group in enumerate(groups, start=1):
            mean = group[3].mean()
            ax.hlines(mean, i - 0.35, i + 0.35, color="black", linestyle="--", linewidth=1.0)
        ax.axhline(exact, color="#d62728", linestyle="--", linewidth=1.0)
        ax.set_title(f"budget C = {budget}")
        ax.tick_params(axis="x", labelsize=8)

    axes[0][0].set_ylabel("estimate")
    fig.suptitle(
        "Estimator distributions at matched budgets "
        f"({spec.k0_label}; whiskers: 1.5 IQR; red dashes: exact; black dashes: means)",
        fontsize=9,
    )
    fig.tight_layout(rect=(0, 0, 1, 0.93))
    svg_path, png_path = _save(fig, spec.output)
    return FigureResult(svg_path=svg_path, png_path=png_path)
