"""Static SVG line charts of convergence curves (log scale, one panel)."""
from __future__ import annotations

import logging
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .trace import Trace  # noqa: E402

logger = logging.getLogger(__name__)

SERIES = (
    ("rel_x_err", "Relative x error", "o"),
    ("ll_err", "LL error", "d"),
    ("gap", "Feasibility gap", "s"),
    ("residual", "Residual R_k", "^"),
)


def create_convergence_chart(trace: Trace, series: Sequence[tuple] = SERIES, target: Optional[float] = 1e-2):
    """Figure with every available positive series against k, or None if nothing is plottable."""
    if not trace.records:
        return None
    df = trace.to_frame().set_index("k")

    fig, ax = plt.subplots(figsize=(10, 6))
    plotted = 0
    for column, label, marker in series:
        if column not in df.columns:
            continue
        values = df[column].dropna()
        values = values[values > 0]
        if values.empty:
            continue
        markevery = max(1, len(values) // 20)
        ax.plot(values.index, values.to_numpy(), label=label, marker=marker, markevery=markevery)
        plotted += 1
    if not plotted:
        plt.close(fig)
        return None

    if target is not None and "rel_x_err" in df.columns:
        ax.axhline(y=target, color="green", linestyle="--", alpha=0.7, label="Target accuracy")

    ax.set_yscale("log")
    ax.set_ylabel("Value")
    ax.set_xlabel("Iteration k")
    ax.set_title(f"Convergence: {trace.metadata.get('problem', 'run')}")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return fig


def save_convergence_svg(trace: Trace, path: str) -> bool:
    fig = create_convergence_chart(trace)
    if fig is None:
        logger.warning("nothing to plot; %s not written", path)
        return False
    fig.savefig(path, format="svg")
    plt.close(fig)
    return True


def create_sweep_chart(axis: str, values: np.ndarray, iters: np.ndarray):
    """Iterations-to-target against the swept value."""
    mask = ~np.isnan(iters)
    if not mask.any():
        return None
    fig, ax = plt.subplots(figsize=(8, 5))
    ax.plot(values[mask], iters[mask], marker="o")
    ax.set_xlabel(axis)
    ax.set_ylabel("Iterations to target")
    ax.set_title(f"Sweep over {axis}")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return fig
