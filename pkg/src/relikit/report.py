"""PNG figure rendering for run artifacts.

Every renderer writes one file next to the matching CSV and returns its
path. The Agg backend is forced so rendering works headless; figures are
closed after saving to keep long comparisons from accumulating state.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .hardness import HardnessScores
from .metrics import SelectiveMetrics
from .pipeline import _KIND_LABEL, _METHOD_LABEL, ExperimentRow
from .search import SearchResult

__all__ = [
    "render_hardness_histogram",
    "render_trace",
    "render_curve",
    "render_comparison",
]

_STAGE_COLORS = {
    "grid": "#1f77b4",
    "bisect": "#d62728",
    "anneal": "#2ca02c",
    "brute": "#7f7f7f",
    "init": "#9467bd",
    "fixed": "#8c564b",
}


def render_hardness_histogram(path: str | Path, scores: HardnessScores) -> Path:
    """Distribution of hardness scores with the upper tail annotated."""
    values = np.array(sorted(scores.scores.values()))
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.hist(values, bins=min(40, max(10, values.size // 5)), color="#1f77b4",
            edgecolor="white")
    ax.axvline(float(np.quantile(values, 0.9)), color="#d62728", linestyle="--",
               label="90th percentile")
    ax.set_xlabel(f"{scores.method} hardness score")
    ax.set_ylabel("instances")
    ax.set_title(f"Hardness distribution ({scores.method}, n={values.size})")
    ax.legend()
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def render_trace(path: str | Path, result: SearchResult) -> Path:
    """Cost against evaluation order, colored by search stage."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    steps = [e.step for e in result.trace]
    costs = [e.cost for e in result.trace]
    ax.plot(steps, costs, color="#bbbbbb", linewidth=1, zorder=1)
    stages = list(dict.fromkeys(e.stage for e in result.trace))
    for stage in stages:
        xs = [e.step for e in result.trace if e.stage == stage]
        ys = [e.cost for e in result.trace if e.stage == stage]
        ax.scatter(xs, ys, s=28, zorder=2, label=stage,
                   color=_STAGE_COLORS.get(stage, "#17becf"))
    ax.axhline(result.best.cost, color="#2ca02c", linestyle=":",
               label=f"best = {result.best.cost:.4f}")
    ax.set_xlabel("evaluation step")
    ax.set_ylabel("cost")
    title = f"{result.method} search ({result.n_evaluations} unique thresholds)"
    if result.final_temperature is not None:
        title += f", final temp {result.final_temperature:.2f}"
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def render_curve(
    path: str | Path,
    curve: Sequence[tuple[float, SelectiveMetrics]],
    label: str = "",
) -> Path:
    """Macro F1, acceptance, and mean score across the rejection grid."""
    t_r = [t for t, _ in curve]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(t_r, [m.macro_f1 for _, m in curve], marker="o", markersize=3,
            label="macro F1", color="#1f77b4")
    ax.plot(t_r, [1.0 - m.rejection_rate for _, m in curve], marker="s",
            markersize=3, label="acceptance rate", color="#ff7f0e")
    ax.plot(t_r, [m.mean_score for _, m in curve], marker="^", markersize=3,
            label="mean score", color="#2ca02c")
    ax.set_xlabel("rejection threshold")
    ax.set_ylabel("value")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(f"Selective trade-off{f' ({label})' if label else ''}")
    ax.legend()
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def render_comparison(path: str | Path, rows: Sequence[ExperimentRow]) -> Path:
    """Macro F1 and mean score bars for every comparison row."""
    labels = []
    for row in rows:
        if row.setup == "standard":
            labels.append(f"{row.index}: standard")
        else:
            labels.append(
                f"{row.index}: {_METHOD_LABEL[row.filter_method]}/"
                f"{_KIND_LABEL[row.reject_method]} {row.setup}"
            )
    x = np.arange(len(rows))
    width = 0.38
    fig, ax = plt.subplots(figsize=(max(8, len(rows) * 0.9), 5))
    ax.bar(x - width / 2, [r.metrics.macro_f1 for r in rows], width,
           label="macro F1", color="#1f77b4")
    ax.bar(x + width / 2, [r.metrics.mean_score for r in rows], width,
           label="mean score", color="#2ca02c")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("value")
    ax.set_title("Configuration comparison")
    ax.legend()
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out
