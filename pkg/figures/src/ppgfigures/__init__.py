"""Render the benchmark harness's CSV outputs into figures: bias-decay
curves with exponential-fit overlays, and budget-matched boxplots."""

__version__ = "0.1.0"

from .figures import FigureResult, FigureSpec, plot_bias_decay, plot_budget_boxplot

__all__ = [
    "FigureResult",
    "FigureSpec",
    "plot_bias_decay",
    "plot_budget_boxplot",
    "__version__",
]
