"""Sweep figures for the report directory."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# strip the software/date stamps so two identical runs write identical bytes
_PNG_META = {"Software": None}


def _finite(xs, ys):
    pts = [(x, y) for x, y in zip(xs, ys) if y is not None and not math.isnan(y)]
    return [p[0] for p in pts], [p[1] for p in pts]


def plot_sweep(path, xs: Sequence[float], series: dict[str, Sequence[float | None]], xlabel: str,
               title: str = "", ylabel: str = "MSE") -> Path:
    """One line per series over a shared x grid; missing points are skipped."""
    fig, ax = plt.subplots(figsize=(4.5, 3.2), dpi=100)
    for (name, ys), marker in zip(series.items(), "osd^v"):
        x, y = _finite(xs, ys)
        if x:
            ax.plot(x, y, marker=marker, label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    if ax.lines:
        ax.legend(frameon=False)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, format="png", metadata=_PNG_META)
    plt.close(fig)
    return path
