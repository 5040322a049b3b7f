"""Selective prediction: score each prediction, accept or abstain.

Two interchangeable score kinds live here.

Confidence runs the main model's raw probability through a fitted sigmoid
map sigma(a * p + b) and takes max(p_cal, 1 - p_cal), landing in [0.5, 1].
The (a, b) pair is fit by Newton iteration on the log loss of held-out
predictions gathered via stratified cross validation.

Certainty fits a committee of ten small boosted-tree models, averages their
positive-class probabilities, takes the binary entropy of that mean, and
rescales entropies to [0, 0.5] across the evaluation batch; certainty is one
minus that, again in [0.5, 1]. Because of the batch rescaling a certainty
value depends on which instances were scored together.

A prediction is accepted exactly when its score reaches the rejection
threshold (score >= t_r), so t_r = 0.5 accepts everything.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._rng import derive_seed, rng_for
from .data import stratified_fold_ids
from .errors import DataError, NumericError
from .learners import GradientBoostingModel, LearnerSpec, TrainedModel, fit, sigmoid
from .learners.base import model_from_doc, model_to_doc

SLOPE_LIMIT = 1e4  # |a| clamp when the calibration data is separable

__all__ = [
    "CalibrationParams",
    "ScoredPrediction",
    "UncertaintyEnsembleSpec",
    "EnsembleMember",
    "CertaintyScores",
    "fit_sigmoid_calibration",
    "calibrated_proba",
    "confidence",
    "decide",
    "cross_val_raw_scores",
    "calibrate_with_cv",
    "fit_uncertainty_ensemble",
    "certainty_scores",
    "certainty_from_member_probs",
    "binary_entropy",
    "write_predictions",
    "save_ensemble",
    "load_ensemble",
]


# ---------------------------------------------------------------------------
# Sigmoid calibration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationParams:
    """Slope/intercept of the probability map sigma(a * p + b)."""

    a: float
    b: float


def _calibration_nll(a: float, b: float, p: np.ndarray, y: np.ndarray) -> float:
    q = np.clip(sigmoid(a * p + b), 1e-12, 1.0 - 1e-12)
    return float(-np.mean(y * np.log(q) + (1.0 - y) * np.log(1.0 - q)))


def _newton_1d_intercept(a: float, p: np.ndarray, y: np.ndarray, b0: float) -> float:
    b = b0
    for _ in range(100):
        q = sigmoid(a * p + b)
        grad = float(np.mean(q - y))
        curv = float(np.mean(q * (1.0 - q)))
        if curv <= 1e-12:
            break
        step = grad / curv
        b -= step
        if abs(step) < 1e-8:
            break
    return b


def fit_sigmoid_calibration(
    raw_scores: np.ndarray, labels: np.ndarray
) -> CalibrationParams:
    """Fit (a, b) of sigma(a * p + b) by Newton descent on the log loss.

    Constant raw scores leave the slope unidentifiable; the fit then returns
    a = 1 with b chosen so every calibrated output equals the base rate, and
    warns. When the scores separate the labels perfectly the slope diverges;
    it is clamped to +/-1e4, the intercept is refit at the clamp, and a
    warning is raised.
    """
    p = np.asarray(raw_scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.ndim != 1 or p.shape != y.shape:
        raise DataError("calibration needs matching 1-D scores and labels")
    if len(p) == 0:
        raise DataError("calibration needs at least one score")

    if np.all(p == p[0]):
        prior = float(np.clip(np.mean(y), 1e-12, 1.0 - 1e-12))
        b = float(np.log(prior / (1.0 - prior)) - p[0])
        warnings.warn(
            "fit_sigmoid_calibration: constant raw scores; mapping everything to the base rate",
            stacklevel=2,
        )
        return CalibrationParams(a=1.0, b=b)

    # A score threshold separating the classes means the slope has no finite
    # optimum (the loss keeps falling as |a| grows); clamp it and fit only b.
    if (y == 0).any() and (y == 1).any():
        direction, boundary = 0.0, 0.0
        if float(np.max(p[y == 0])) < float(np.min(p[y == 1])):
            direction = 1.0
            boundary = (float(np.max(p[y == 0])) + float(np.min(p[y == 1]))) / 2.0
        elif float(np.max(p[y == 1])) < float(np.min(p[y == 0])):
            direction = -1.0
            boundary = (float(np.max(p[y == 1])) + float(np.min(p[y == 0]))) / 2.0
        if direction != 0.0:
            a = direction * SLOPE_LIMIT
            b = _newton_1d_intercept(a, p, y, b0=-a * boundary)
            warnings.warn(
                "fit_sigmoid_calibration: separable calibration data; slope clamped",
                stacklevel=2,
            )
            return CalibrationParams(a=float(a), b=float(b))

    a, b = 1.0, 0.0
    nll = _calibration_nll(a, b, p, y)
    for _ in range(100):
        q = sigmoid(a * p + b)
        w = q * (1.0 - q)
        grad = np.array([float(np.mean((q - y) * p)), float(np.mean(q - y))])
        H = np.array(
            [
                [float(np.mean(w * p * p)), float(np.mean(w * p))],
                [float(np.mean(w * p)), float(np.mean(w))],
            ]
        )
        try:
            step = np.linalg.solve(H + 1e-12 * np.eye(2), grad)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"calibration Newton failed: {exc}") from exc
        scale = 1.0
        moved = False
        for _halving in range(50):
            ca, cb = a - scale * step[0], b - scale * step[1]
            cand = _calibration_nll(ca, cb, p, y)
            if cand <= nll:
                a, b, nll = ca, cb, cand
                moved = True
                break
            scale *= 0.5
        if not moved or float(np.max(np.abs(scale * step))) < 1e-8:
            break
    if abs(a) >= SLOPE_LIMIT:
        a = float(np.sign(a) * SLOPE_LIMIT)
        b = _newton_1d_intercept(a, p, y, b0=0.0)
        warnings.warn(
            "fit_sigmoid_calibration: separable calibration data; slope clamped",
            stacklevel=2,
        )
    return CalibrationParams(a=float(a), b=float(b))


def calibrated_proba(params: CalibrationParams, raw_scores: np.ndarray) -> np.ndarray:
    """Apply the fitted map: sigma(a * p + b)."""
    return sigmoid(params.a * np.asarray(raw_scores, dtype=np.float64) + params.b)


def cross_val_raw_scores(
    spec: LearnerSpec,
    X: np.ndarray,
    y: np.ndarray,
    n_folds: int = 5,
    seed: int = 0,
) -> np.ndarray:
    """Out-of-fold raw probability for every row via stratified CV refits."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    fold_ids = stratified_fold_ids(y, n_folds, rng_for(seed, "calibration-cv"))
    out = np.empty(len(y))
    for f in range(n_folds):
        test = fold_ids == f
        if not test.any():
            continue
        model = fit(spec, X[~test], y[~test], seed=derive_seed(seed, "calibration-fit", f))
        out[test] = model.predict_proba(X[test])
    return out


def calibrate_with_cv(
    spec: LearnerSpec,
    X: np.ndarray,
    y: np.ndarray,
    n_folds: int = 5,
    seed: int = 0,
) -> CalibrationParams:
    """Fit calibration on held-out predictions so it never sees in-sample fit."""
    return fit_sigmoid_calibration(cross_val_raw_scores(spec, X, y, n_folds, seed), y)


# ---------------------------------------------------------------------------
# Confidence and the accept/abstain rule
# ---------------------------------------------------------------------------


def confidence(calibrated: np.ndarray) -> np.ndarray:
    """max(p, 1 - p) of a calibrated probability; always in [0.5, 1]."""
    p = np.asarray(calibrated, dtype=np.float64)
    return np.maximum(p, 1.0 - p)


def decide(scores: np.ndarray, t_r: float) -> np.ndarray:
    """Accept mask: a prediction is kept exactly when score >= t_r."""
    return np.asarray(scores, dtype=np.float64) >= t_r


@dataclass(frozen=True)
class ScoredPrediction:
    instance_id: str
    predicted_label: int
    score: float
    score_kind: str  # "confidence" or "certainty"
    accepted: bool
    t_r: float


def write_predictions(path: str | Path, predictions: Sequence[ScoredPrediction]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["instance_id", "predicted_label", "score", "score_kind", "decision", "t_r"]
        )
        for pred in predictions:
            writer.writerow(
                [
                    pred.instance_id,
                    pred.predicted_label,
                    f"{pred.score:.6f}",
                    pred.score_kind,
                    "accepted" if pred.accepted else "rejected",
                    f"{pred.t_r:.6f}",
                ]
            )


# ---------------------------------------------------------------------------
# Certainty via a committee of small boosted-tree models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnsembleMember:
    max_depth: int
    learning_rate: float
    subsample: float
    colsample_bytree: float
    random_state: int


DEFAULT_MEMBERS: tuple[EnsembleMember, ...] = (
    EnsembleMember(3, 0.10, 0.80, 0.80, 0),
    EnsembleMember(4, 0.05, 0.70, 1.00, 1),
    EnsembleMember(5, 0.20, 1.00, 0.60, 2),
    EnsembleMember(6, 0.10, 0.90, 0.90, 3),
    EnsembleMember(3, 0.30, 0.60, 0.70, 4),
    EnsembleMember(4, 0.15, 0.85, 1.00, 5),
    EnsembleMember(5, 0.07, 0.75, 0.85, 6),
    EnsembleMember(6, 0.10, 0.65, 0.90, 7),
    EnsembleMember(3, 0.20, 0.95, 0.60, 8),
    EnsembleMember(4, 0.10, 0.80, 0.95, 9),
)


@dataclass(frozen=True)
class UncertaintyEnsembleSpec:
    """Committee layout: ten members, fifteen boosting rounds each."""

    n_trees: int = 15
    members: tuple[EnsembleMember, ...] = DEFAULT_MEMBERS


@dataclass(frozen=True)
class UncertaintyEnsemble:
    spec: UncertaintyEnsembleSpec
    models: tuple[TrainedModel, ...]

    def member_probabilities(self, X: np.ndarray) -> np.ndarray:
        """(n_members, n_rows) matrix of positive-class probabilities."""
        return np.stack([m.predict_proba(X) for m in self.models])


def fit_uncertainty_ensemble(
    X: np.ndarray,
    y: np.ndarray,
    spec: UncertaintyEnsembleSpec | None = None,
) -> UncertaintyEnsemble:
    """Fit every committee member on the same training data; diversity comes
    from their differing depths, learning rates, subsampling, and seeds."""
    spec = spec or UncertaintyEnsembleSpec()
    models = []
    for member in spec.members:
        learner = LearnerSpec(
            "gradient_boosting",
            {
                "n_estimators": spec.n_trees,
                "max_depth": member.max_depth,
                "learning_rate": member.learning_rate,
                "subsample": member.subsample,
                "colsample_bytree": member.colsample_bytree,
            },
        )
        models.append(fit(learner, X, y, seed=member.random_state))
    return UncertaintyEnsemble(spec=spec, models=tuple(models))


def binary_entropy(p: np.ndarray) -> np.ndarray:
    """Entropy of a Bernoulli(p) in nats; 0 at p in {0, 1}, ln 2 at p = 0.5."""
    p = np.asarray(p, dtype=np.float64)
    out = np.zeros_like(p)
    inner = (p > 0.0) & (p < 1.0)
    pi = p[inner]
    out[inner] = -(pi * np.log(pi) + (1.0 - pi) * np.log(1.0 - pi))
    return out


@dataclass(frozen=True)
class CertaintyScores:
    """Batch-normalized certainty values plus the stats behind them."""

    values: np.ndarray
    entropy_min: float
    entropy_max: float
    degenerate: bool
    mean_probability: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]


def certainty_from_member_probs(member_probs: np.ndarray) -> CertaintyScores:
    """Certainty of each column of an (n_members, n_rows) probability matrix.

    The binary entropy of the member mean is min-max rescaled onto [0, 0.5]
    across the batch and flipped, giving values in [0.5, 1]. A batch whose
    entropies are all equal carries no ranking signal: every instance gets
    certainty 1.0 and a warning is raised.
    """
    member_probs = np.asarray(member_probs, dtype=np.float64)
    if member_probs.ndim != 2 or member_probs.shape[0] < 1:
        raise DataError("member probability matrix must be (n_members, n_rows)")
    mean_p = member_probs.mean(axis=0)
    ent = binary_entropy(mean_p)
    lo, hi = float(ent.min()), float(ent.max())
    if hi - lo <= 0.0:
        warnings.warn(
            "certainty: all batch entropies equal; assigning certainty 1.0 everywhere",
            stacklevel=2,
        )
        values = np.ones_like(ent)
        return CertaintyScores(values, lo, hi, True, mean_p)
    scaled = 0.5 * (ent - lo) / (hi - lo)
    return CertaintyScores(1.0 - scaled, lo, hi, False, mean_p)


def certainty_scores(ensemble: UncertaintyEnsemble, X: np.ndarray) -> CertaintyScores:
    """Score a batch with the fitted committee. Batch composition matters:
    the entropy rescaling spans exactly the rows of X."""
    return certainty_from_member_probs(ensemble.member_probabilities(X))


def save_ensemble(path: str | Path, ensemble: UncertaintyEnsemble) -> None:
    """Persist the fitted committee as one JSON document."""
    doc = {
        "format_version": 1,
        "kind": "uncertainty_ensemble",
        "n_trees": ensemble.spec.n_trees,
        "members": [
            {
                "max_depth": m.max_depth,
                "learning_rate": m.learning_rate,
                "subsample": m.subsample,
                "colsample_bytree": m.colsample_bytree,
                "random_state": m.random_state,
            }
            for m in ensemble.spec.members
        ],
        "models": [model_to_doc(m) for m in ensemble.models],
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_ensemble(path: str | Path) -> UncertaintyEnsemble:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read ensemble file {path}: {exc}") from exc
    if doc.get("format_version") != 1 or doc.get("kind") != "uncertainty_ensemble":
        raise DataError(f"not an uncertainty ensemble file: {path}")
    members = tuple(EnsembleMember(**m) for m in doc["members"])
    spec = UncertaintyEnsembleSpec(n_trees=int(doc["n_trees"]), members=members)
    models = tuple(model_from_doc(d) for d in doc["models"])
    return UncertaintyEnsemble(spec=spec, models=models)
