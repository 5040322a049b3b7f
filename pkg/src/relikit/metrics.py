"""Selective-classification metrics.

Quality metrics (precision, recall, macro F1, mean score) are computed over
accepted predictions only; acceptance rates relate each class's accepted
count to its full size; the rejection rate relates total accepted to total
scored. Any zero-denominator ratio is reported as 0.0 and flagged rather
than raising, because sparse acceptance patterns make empty cells routine.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError

__all__ = [
    "SelectiveMetrics",
    "per_class_precision_recall",
    "macro_f1",
    "selective_evaluate",
    "tradeoff_curve",
    "write_curve",
]


@dataclass(frozen=True)
class SelectiveMetrics:
    """Metric bundle for one (prediction, acceptance) outcome."""

    precision: tuple[float, float]
    recall: tuple[float, float]
    acceptance: tuple[float, float]
    macro_f1: float
    rejection_rate: float
    mean_score: float
    n_total: int
    n_accepted: int
    had_zero_division: bool


def per_class_precision_recall(
    y_true: np.ndarray, y_pred: np.ndarray
) -> tuple[tuple[float, float], tuple[float, float], bool]:
    """(precision_0, precision_1), (recall_0, recall_1), zero-division flag."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise DataError("y_true and y_pred must have equal length")
    flagged = False
    precision = [0.0, 0.0]
    recall = [0.0, 0.0]
    for c in (0, 1):
        pred_c = y_pred == c
        true_c = y_true == c
        tp = float(np.sum(pred_c & true_c))
        if pred_c.sum() == 0:
            flagged = True
        else:
            precision[c] = tp / float(pred_c.sum())
        if true_c.sum() == 0:
            flagged = True
        else:
            recall[c] = tp / float(true_c.sum())
    return (precision[0], precision[1]), (recall[0], recall[1]), flagged


def macro_f1(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Unweighted mean of the two per-class F1 scores (0 when degenerate)."""
    precision, recall, _ = per_class_precision_recall(y_true, y_pred)
    f1s = []
    for c in (0, 1):
        denom = precision[c] + recall[c]
        f1s.append(0.0 if denom == 0.0 else 2.0 * precision[c] * recall[c] / denom)
    return float(np.mean(f1s))


def selective_evaluate(
    y_true: np.ndarray,
    y_pred: np.ndarray,
    scores: np.ndarray,
    accepted: np.ndarray,
) -> SelectiveMetrics:
    """Evaluate predictions under an acceptance mask.

    Precision, recall, macro F1, and mean score cover accepted instances
    only; acceptance rates are per-class fractions of the whole batch. With
    nothing accepted every accepted-side metric is 0.0 and the bundle is
    flagged.
    """
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    scores = np.asarray(scores, dtype=np.float64)
    accepted = np.asarray(accepted, dtype=bool)
    n = len(y_true)
    if not (len(y_pred) == len(scores) == len(accepted) == n):
        raise DataError("metric inputs must agree in length")
    if n == 0:
        raise DataError("cannot evaluate an empty batch")

    acceptance = [0.0, 0.0]
    flagged = False
    for c in (0, 1):
        mask = y_true == c
        if mask.sum() == 0:
            flagged = True
        else:
            acceptance[c] = float(accepted[mask].mean())

    n_accepted = int(accepted.sum())
    rejection_rate = 1.0 - n_accepted / n
    if n_accepted == 0:
        return SelectiveMetrics(
            precision=(0.0, 0.0),
            recall=(0.0, 0.0),
            acceptance=(acceptance[0], acceptance[1]),
            macro_f1=0.0,
            rejection_rate=1.0,
            mean_score=0.0,
            n_total=n,
            n_accepted=0,
            had_zero_division=True,
        )
    precision, recall, pr_flag = per_class_precision_recall(
        y_true[accepted], y_pred[accepted]
    )
    f1s = []
    for c in (0, 1):
        denom = precision[c] + recall[c]
        f1s.append(0.0 if denom == 0.0 else 2.0 * precision[c] * recall[c] / denom)
    return SelectiveMetrics(
        precision=precision,
        recall=recall,
        acceptance=(acceptance[0], acceptance[1]),
        macro_f1=float(np.mean(f1s)),
        rejection_rate=float(rejection_rate),
        mean_score=float(scores[accepted].mean()),
        n_total=n,
        n_accepted=n_accepted,
        had_zero_division=flagged or pr_flag,
    )


def tradeoff_curve(
    y_true: np.ndarray,
    y_pred: np.ndarray,
    scores: np.ndarray,
    t_r_grid: Sequence[float],
) -> list[tuple[float, SelectiveMetrics]]:
    """Sweep the rejection threshold and evaluate at each grid point."""
    scores = np.asarray(scores, dtype=np.float64)
    out = []
    for t_r in t_r_grid:
        accepted = scores >= t_r
        out.append((float(t_r), selective_evaluate(y_true, y_pred, scores, accepted)))
    return out


def write_curve(path: str | Path, curve: list[tuple[float, SelectiveMetrics]]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "t_r",
                "macro_f1",
                "rejection_rate",
                "mean_score",
                "n_accepted",
                "prc_0",
                "prc_1",
                "rcl_0",
                "rcl_1",
                "acp_0",
                "acp_1",
            ]
        )
        for t_r, m in curve:
            writer.writerow(
                [f"{t_r:.3f}"]
                + [
                    f"{v:.6f}"
                    for v in (
                        m.macro_f1,
                        m.rejection_rate,
                        m.mean_score,
                    )
                ]
                + [str(m.n_accepted)]
                + [
                    f"{v:.6f}"
                    for v in (
                        m.precision[0],
                        m.precision[1],
                        m.recall[0],
                        m.recall[1],
                        m.acceptance[0],
                        m.acceptance[1],
                    )
                ]
            )
