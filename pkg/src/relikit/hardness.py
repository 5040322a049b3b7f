"""Training-instance hardness scores.

Two estimators produce an id -> score mapping in [0, 1] where high means
hard (likely to hurt the model that trains on it).

Consensus hardness ("ih") runs repeated stratified cross validation; in each
round every learner in a heterogeneous pool is fit on the fold's balanced
training side, calibrated on its own held-out training predictions, and then
scores the held-out fold. An instance's hardness is one minus the average
calibrated probability its true class received across all rounds and pool
members.

Influence hardness ("if") differentiates a regularized logistic model: for
each cross-validation run it computes, per training instance, the inner
product of the mean validation-loss gradient with the inverse-Hessian-mapped
instance gradient (the upweighting influence with its sign flipped, turning
it into a first-order estimate of how the mean validation loss would move if
the instance were dropped), scales the run's values by its mean validation
log loss, min-max normalizes them to [0, 1], and averages each instance over
the runs it appeared in. The filtering stage treats the top of this ranking
as the instances to drop. Because balancing can leave majority-class rows
out of every run, a coverage sweep forces any never-scored instance into a
balanced training side and records its score from that run.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from ._rng import derive_seed, rng_for
from .data import Dataset, maybe_undersample, stratified_fold_ids
from .errors import ConfigError, DataError, NumericError
from .learners import (
    LearnerSpec,
    default_pool,
    fit,
    fit_logistic_weights,
    log_loss,
    logistic_gradient,
    logistic_hessian,
    sigmoid,
)
from .selective import calibrate_with_cv, calibrated_proba

METHOD_CONSENSUS = "ih"
METHOD_INFLUENCE = "if"

SCORES_FORMAT_VERSION = 1

__all__ = [
    "CvProtocol",
    "HardnessScores",
    "compute_ih",
    "compute_influence",
    "single_fit_influence",
    "hessian_solve",
    "write_scores",
    "load_scores",
    "METHOD_CONSENSUS",
    "METHOD_INFLUENCE",
]


@dataclass(frozen=True)
class CvProtocol:
    """Cross-validation layout shared by both hardness estimators."""

    n_folds: int = 5
    n_repeats: int = 5
    calibration_folds: int = 5
    undersample_trigger: float = 0.6

    def __post_init__(self) -> None:
        if self.n_folds < 2 or self.n_repeats < 1 or self.calibration_folds < 2:
            raise ConfigError("protocol needs n_folds >= 2, n_repeats >= 1, calibration_folds >= 2")
        if not 0.0 <= self.undersample_trigger <= 1.0:
            raise ConfigError("undersample_trigger must lie in [0, 1]")


@dataclass(frozen=True)
class HardnessScores:
    """Scores plus enough provenance to reproduce them."""

    method: str
    scores: Mapping[str, float]
    n_rounds: Mapping[str, int]
    protocol: CvProtocol
    seed: int
    detail: Mapping[str, object] = field(default_factory=dict)

    def as_array(self, dataset: Dataset) -> np.ndarray:
        return np.array([self.scores[iid] for iid in dataset.instance_ids])


def _check_hardness_inputs(dataset: Dataset, protocol: CvProtocol) -> None:
    if dataset.has_missing():
        raise DataError("hardness estimation requires a complete matrix; impute first")
    n0, n1 = dataset.class_counts()
    if min(n0, n1) < protocol.n_folds:
        raise DataError(
            f"each class needs at least n_folds={protocol.n_folds} instances "
            f"(got {n0} and {n1})"
        )


# ---------------------------------------------------------------------------
# Consensus hardness
# ---------------------------------------------------------------------------


def compute_ih(
    dataset: Dataset,
    pool: Sequence[LearnerSpec] | None = None,
    protocol: CvProtocol | None = None,
    seed: int = 0,
) -> HardnessScores:
    """Consensus hardness: 1 - mean calibrated true-class probability.

    Every instance is held out exactly once per repeat, so each accumulates
    n_repeats * len(pool) probabilities regardless of the balancing applied
    to training sides.
    """
    protocol = protocol or CvProtocol()
    pool = tuple(pool) if pool is not None else default_pool()
    if not pool:
        raise ConfigError("consensus hardness needs a non-empty learner pool")
    _check_hardness_inputs(dataset, protocol)

    labels = dataset.labels
    n = dataset.n_instances
    prob_sum = np.zeros(n)
    prob_count = np.zeros(n, dtype=np.int64)

    for r in range(protocol.n_repeats):
        fold_ids = stratified_fold_ids(labels, protocol.n_folds, rng_for(seed, "ih-folds", r))
        for f in range(protocol.n_folds):
            test_mask = fold_ids == f
            if not test_mask.any():
                continue
            train_ds = dataset.subset(np.where(~test_mask)[0])
            balanced = maybe_undersample(
                train_ds,
                protocol.undersample_trigger,
                seed=derive_seed(seed, "ih-balance", r, f),
            )
            Xb, yb = balanced.features, balanced.labels
            Xt = dataset.features[test_mask]
            yt = labels[test_mask]
            for spec in pool:
                params = calibrate_with_cv(
                    spec,
                    Xb,
                    yb,
                    n_folds=protocol.calibration_folds,
                    seed=derive_seed(seed, "ih-calibration", r, f, spec.kind),
                )
                model = fit(spec, Xb, yb, seed=derive_seed(seed, "ih-fit", r, f, spec.kind))
                cal = calibrated_proba(params, model.predict_proba(Xt))
                p_true = np.where(yt == 1, cal, 1.0 - cal)
                prob_sum[test_mask] += p_true
                prob_count[test_mask] += 1

    if (prob_count == 0).any():
        raise NumericError("consensus hardness left instances unscored")
    values = 1.0 - prob_sum / prob_count
    ids = dataset.instance_ids
    return HardnessScores(
        method=METHOD_CONSENSUS,
        scores={iid: float(v) for iid, v in zip(ids, values)},
        n_rounds={iid: int(c) // len(pool) for iid, c in zip(ids, prob_count)},
        protocol=protocol,
        seed=seed,
        detail={"pool": [s.kind for s in pool]},
    )


# ---------------------------------------------------------------------------
# Influence hardness
# ---------------------------------------------------------------------------


def hessian_solve(H: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve H x = rhs for a symmetric positive-definite H.

    Checks symmetry, uses a Cholesky factorization attempt as the
    positive-definiteness probe, applies one step of iterative refinement,
    and insists on a relative residual of 1e-8 or better.
    """
    H = np.asarray(H, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] != H.shape[1] or rhs.shape != (H.shape[0],):
        raise DataError("hessian_solve expects a square matrix and matching vector")
    scale = max(float(np.max(np.abs(H))), 1.0)
    if float(np.max(np.abs(H - H.T))) > 1e-8 * scale:
        raise NumericError("hessian_solve: matrix is not symmetric")
    try:
        np.linalg.cholesky(H)
    except np.linalg.LinAlgError as exc:
        raise NumericError("hessian_solve: matrix is not positive definite") from exc
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return np.zeros_like(rhs)
    x = np.linalg.solve(H, rhs)
    x = x + np.linalg.solve(H, rhs - H @ x)
    residual = float(np.linalg.norm(rhs - H @ x))
    if residual > 1e-8 * rhs_norm:
        raise NumericError(
            f"hessian_solve: residual {residual:.3e} exceeds 1e-8 * ||rhs||"
        )
    return x


def _influence_parts(
    train_X: np.ndarray,
    train_y: np.ndarray,
    val_X: np.ndarray,
    val_y: np.ndarray,
    l2: float,
) -> tuple[np.ndarray, float]:
    """(sign-flipped influence per training instance, mean validation log loss)."""
    train_X = np.asarray(train_X, dtype=np.float64)
    train_y = np.asarray(train_y, dtype=np.float64)
    val_X = np.asarray(val_X, dtype=np.float64)
    w = fit_logistic_weights(train_X, train_y, l2=l2)
    H = logistic_hessian(w, train_X, train_y, l2)
    mean_val_grad = logistic_gradient(w, val_X, val_y, 0.0)
    v = hessian_solve(H, mean_val_grad)
    Xa = np.hstack([train_X, np.ones((train_X.shape[0], 1))])
    per_instance_grads = Xa * (sigmoid(Xa @ w) - train_y)[:, None]
    Xva = np.hstack([val_X, np.ones((val_X.shape[0], 1))])
    val_ll = log_loss(val_y, sigmoid(Xva @ w))
    return per_instance_grads @ v, val_ll


def single_fit_influence(
    train_X: np.ndarray,
    train_y: np.ndarray,
    val_X: np.ndarray,
    val_y: np.ndarray,
    l2: float = 1e-4,
) -> np.ndarray:
    """Sign-flipped influence of each training instance on the mean
    validation loss of one fitted logistic model.

    Positive values estimate that dropping the instance would raise the
    validation loss; negative values mark instances whose removal should
    lower it. The Hessian carries the fit's l2 term; the validation gradient
    is of the plain log loss.
    """
    raw, _ = _influence_parts(train_X, train_y, val_X, val_y, l2)
    return raw


def _normalized_influence_run(
    train_X: np.ndarray,
    train_y: np.ndarray,
    val_X: np.ndarray,
    val_y: np.ndarray,
    l2: float,
) -> np.ndarray:
    """One run: influence, scaled by the fold's mean validation log loss,
    then min-max normalized over this run's training instances."""
    raw, val_ll = _influence_parts(train_X, train_y, val_X, val_y, l2)
    scaled = raw * val_ll
    lo, hi = float(scaled.min()), float(scaled.max())
    if hi - lo <= 0.0:
        return np.zeros_like(scaled)
    return (scaled - lo) / (hi - lo)


def _undersample_forcing(
    dataset: Dataset, forced_ids: set[str], trigger: float, seed: int
) -> Dataset:
    """Balanced subset like maybe_undersample, but guaranteed (quota
    permitting) to keep the forced instances."""
    n0, n1 = dataset.class_counts()
    if min(n0, n1) / max(n0, n1) > trigger:
        return dataset
    quota = min(n0, n1)
    rng = rng_for(seed, "coverage-balance")
    keep: list[int] = []
    for cls in (0, 1):
        members = np.where(dataset.labels == cls)[0]
        forced = np.array(
            [i for i in members if dataset.instance_ids[i] in forced_ids], dtype=np.int64
        )
        if len(members) == quota:
            keep.extend(members.tolist())
        elif len(forced) >= quota:
            keep.extend(rng.choice(forced, size=quota, replace=False).tolist())
        else:
            rest = np.array([i for i in members if i not in set(forced.tolist())])
            fill = rng.choice(rest, size=quota - len(forced), replace=False)
            keep.extend(forced.tolist() + fill.tolist())
    return dataset.subset(sorted(keep))


def compute_influence(
    dataset: Dataset,
    protocol: CvProtocol | None = None,
    seed: int = 0,
    l2: float = 1e-4,
) -> HardnessScores:
    """Influence hardness over repeated cross validation with coverage.

    Scores land on training-side instances, so rows dropped by balancing in
    every run would be left unscored; the coverage sweep reruns folds with
    those rows forced into the balanced training side and records their
    scores from the full run's normalization.
    """
    protocol = protocol or CvProtocol()
    _check_hardness_inputs(dataset, protocol)
    labels = dataset.labels
    ids = dataset.instance_ids
    index_of = dataset.index_of()
    score_sum = np.zeros(dataset.n_instances)
    score_count = np.zeros(dataset.n_instances, dtype=np.int64)

    def record(balanced: Dataset, values: np.ndarray, only: set[str] | None) -> None:
        for row, iid in enumerate(balanced.instance_ids):
            if only is not None and iid not in only:
                continue
            score_sum[index_of[iid]] += float(values[row])
            score_count[index_of[iid]] += 1

    fold_assignments = [
        stratified_fold_ids(labels, protocol.n_folds, rng_for(seed, "if-folds", r))
        for r in range(protocol.n_repeats)
    ]
    for r in range(protocol.n_repeats):
        fold_ids = fold_assignments[r]
        for f in range(protocol.n_folds):
            val_mask = fold_ids == f
            if not val_mask.any():
                continue
            train_ds = dataset.subset(np.where(~val_mask)[0])
            balanced = maybe_undersample(
                train_ds,
                protocol.undersample_trigger,
                seed=derive_seed(seed, "if-balance", r, f),
            )
            values = _normalized_influence_run(
                balanced.features,
                balanced.labels,
                dataset.features[val_mask],
                labels[val_mask],
                l2,
            )
            record(balanced, values, only=None)

    uncovered = {ids[i] for i in np.where(score_count == 0)[0]}
    for r in range(protocol.n_repeats):
        if not uncovered:
            break
        fold_ids = fold_assignments[r]
        for attempt in range(protocol.n_folds):
            if not uncovered:
                break
            per_fold = [
                sum(
                    1
                    for i in np.where(fold_ids != f)[0]
                    if ids[i] in uncovered
                )
                for f in range(protocol.n_folds)
            ]
            f = int(np.argmax(per_fold))
            if per_fold[f] == 0:
                break
            val_mask = fold_ids == f
            train_ds = dataset.subset(np.where(~val_mask)[0])
            balanced = _undersample_forcing(
                train_ds,
                uncovered,
                protocol.undersample_trigger,
                seed=derive_seed(seed, "if-coverage", r, attempt),
            )
            values = _normalized_influence_run(
                balanced.features,
                balanced.labels,
                dataset.features[val_mask],
                labels[val_mask],
                l2,
            )
            newly = uncovered & set(balanced.instance_ids)
            record(balanced, values, only=newly)
            uncovered -= newly
    if uncovered:
        raise NumericError(
            f"influence coverage incomplete for {len(uncovered)} instances"
        )

    values = score_sum / score_count
    return HardnessScores(
        method=METHOD_INFLUENCE,
        scores={iid: float(v) for iid, v in zip(ids, values)},
        n_rounds={iid: int(c) for iid, c in zip(ids, score_count)},
        protocol=protocol,
        seed=seed,
        detail={"l2": l2},
    )


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def write_scores(path: str | Path, scores: HardnessScores) -> Path:
    """Write the scores CSV plus a JSON provenance sidecar; returns the
    sidecar path."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance_id", "score", "method", "n_rounds"])
        for iid in scores.scores:
            writer.writerow(
                [iid, f"{scores.scores[iid]:.6f}", scores.method, scores.n_rounds[iid]]
            )
    sidecar = path.with_suffix(".json")
    sidecar.write_text(
        json.dumps(
            {
                "format_version": SCORES_FORMAT_VERSION,
                "package_version": __version__,
                "method": scores.method,
                "seed": scores.seed,
                "protocol": {
                    "n_folds": scores.protocol.n_folds,
                    "n_repeats": scores.protocol.n_repeats,
                    "calibration_folds": scores.protocol.calibration_folds,
                    "undersample_trigger": scores.protocol.undersample_trigger,
                },
                "detail": dict(scores.detail),
            },
            indent=2,
        ),
        encoding="utf-8",
    )
    return sidecar


def load_scores(path: str | Path) -> HardnessScores:
    """Read a scores CSV (and its sidecar when present) back into memory."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"scores file not found: {path}")
    scores: dict[str, float] = {}
    n_rounds: dict[str, int] = {}
    method = ""
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        expected = {"instance_id", "score", "method", "n_rounds"}
        if reader.fieldnames is None or not expected <= set(reader.fieldnames):
            raise DataError(f"scores file {path} is missing columns {expected}")
        for row in reader:
            iid = row["instance_id"]
            if iid in scores:
                raise DataError(f"duplicate instance id {iid!r} in {path}")
            scores[iid] = float(row["score"])
            n_rounds[iid] = int(row["n_rounds"])
            method = row["method"]
    if not scores:
        raise DataError(f"scores file {path} holds no rows")
    protocol = CvProtocol()
    seed = 0
    detail: dict[str, object] = {}
    sidecar = path.with_suffix(".json")
    if sidecar.exists():
        try:
            doc = json.loads(sidecar.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataError(f"unreadable scores sidecar {sidecar}: {exc}") from exc
        if doc.get("format_version") != SCORES_FORMAT_VERSION:
            warnings.warn(
                f"scores sidecar {sidecar} has format_version {doc.get('format_version')}; "
                f"expected {SCORES_FORMAT_VERSION}",
                stacklevel=2,
            )
        proto = doc.get("protocol", {})
        protocol = CvProtocol(
            n_folds=int(proto.get("n_folds", 5)),
            n_repeats=int(proto.get("n_repeats", 5)),
            calibration_folds=int(proto.get("calibration_folds", 5)),
            undersample_trigger=float(proto.get("undersample_trigger", 0.6)),
        )
        seed = int(doc.get("seed", 0))
        detail = dict(doc.get("detail", {}))
    return HardnessScores(
        method=method,
        scores=scores,
        n_rounds=n_rounds,
        protocol=protocol,
        seed=seed,
        detail=detail,
    )
