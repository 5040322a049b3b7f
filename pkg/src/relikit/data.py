"""Dataset representation plus ingestion, imputation, encoding, splitting,
rebalancing, and hardness-based filtering.

A :class:`Dataset` is a dense float matrix with binary labels and stable
string instance ids. Missing entries are ``NaN``. All operations here are
pure functions of (input, seed): they never mutate their arguments and
never touch global RNG state.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._rng import rng_for
from .errors import ConfigError, DataError

__all__ = [
    "Dataset",
    "SplitPair",
    "load_csv",
    "save_csv",
    "one_hot_encode",
    "impute_knn",
    "stratified_split",
    "stratified_fold_ids",
    "undersample",
    "maybe_undersample",
    "filter_by_hardness",
]


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dataset:
    """Feature matrix + binary labels keyed by unique string instance ids.

    features is float64 with NaN marking missing entries. labels take values
    in {0, 1}. categorical_levels maps a column name to the sorted tuple of
    original string levels for columns that were factorized at load time
    (cell values in such columns are level indices stored as floats).
    """

    instance_ids: tuple[str, ...]
    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]
    categorical_levels: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        feats = _readonly(np.asarray(self.features, dtype=np.float64))
        labels = _readonly(np.asarray(self.labels, dtype=np.int64))
        object.__setattr__(self, "instance_ids", tuple(str(i) for i in self.instance_ids))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        if feats.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        n = feats.shape[0]
        if len(self.instance_ids) != n or labels.shape != (n,):
            raise DataError("instance_ids, features, and labels must agree in length")
        if len(set(self.instance_ids)) != n:
            raise DataError("instance_ids must be unique")
        if n and not np.isin(labels, (0, 1)).all():
            raise DataError("labels must take values in {0, 1}")
        if len(self.feature_names) != feats.shape[1]:
            raise DataError("feature_names length must match feature columns")

    @property
    def n_instances(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> tuple[int, int]:
        return int(np.sum(self.labels == 0)), int(np.sum(self.labels == 1))

    def has_missing(self) -> bool:
        return bool(np.isnan(self.features).any())

    def subset(self, row_indices: Sequence[int]) -> "Dataset":
        """New Dataset holding the given rows, in the given order."""
        idx = np.asarray(row_indices, dtype=np.int64)
        return Dataset(
            instance_ids=tuple(self.instance_ids[i] for i in idx),
            features=self.features[idx],
            labels=self.labels[idx],
            feature_names=self.feature_names,
            categorical_levels=dict(self.categorical_levels),
        )

    def index_of(self) -> dict[str, int]:
        return {iid: i for i, iid in enumerate(self.instance_ids)}


@dataclass(frozen=True)
class SplitPair:
    """A stratified train/validation split of one source dataset."""

    train: Dataset
    validation: Dataset
    seed: int
    ratio: float


def load_csv(
    path: str | Path,
    label_column: str,
    id_column: str | None = None,
    positive_value: str | None = None,
    categorical_columns: Sequence[str] = (),
    missing_sentinels: Sequence[str] = ("",),
) -> Dataset:
    """Load a header-ed CSV into a Dataset.

    The label column must hold exactly two distinct values; positive_value
    picks which maps to 1 (default: the lexicographically larger one).
    Columns named in categorical_columns are factorized to level indices
    with the sorted level strings recorded on the Dataset; any other cell
    that does not parse as a number becomes a missing entry (NaN).
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise DataError(f"empty file: {path}")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if label_column not in header:
        raise DataError(f"missing label column {label_column!r} in {path}")
    if id_column is not None and id_column not in header:
        raise DataError(f"missing id column {id_column!r} in {path}")
    if not body:
        raise DataError(f"no data rows in {path}")

    label_pos = header.index(label_column)
    id_pos = header.index(id_column) if id_column is not None else None
    feature_cols = [
        (j, name)
        for j, name in enumerate(header)
        if j != label_pos and j != id_pos
    ]
    missing = {s for s in missing_sentinels}

    raw_labels: list[str] = []
    ids: list[str] = []
    width = len(str(max(len(body) - 1, 0)))
    cells: list[list[str]] = []
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise DataError(f"row {i + 2} of {path} has {len(row)} cells, header has {len(header)}")
        raw_labels.append(row[label_pos].strip())
        ids.append(row[id_pos].strip() if id_pos is not None else f"{i:0{width}d}")
        cells.append([row[j].strip() for j, _ in feature_cols])

    distinct = sorted(set(raw_labels))
    if len(distinct) != 2:
        raise DataError(
            f"label cardinality: expected exactly 2 distinct label values, got {len(distinct)} ({distinct[:5]})"
        )
    if positive_value is None:
        positive = distinct[1]
    else:
        if positive_value not in distinct:
            raise ConfigError(f"positive_value {positive_value!r} not among labels {distinct}")
        positive = positive_value
    labels = np.array([1 if v == positive else 0 for v in raw_labels], dtype=np.int64)

    names = [name for _, name in feature_cols]
    for col in categorical_columns:
        if col not in names:
            raise DataError(f"categorical column {col!r} not found")
    n, d = len(body), len(names)
    feats = np.full((n, d), np.nan)
    levels: dict[str, tuple[str, ...]] = {}
    for j, name in enumerate(names):
        column = [cells[i][j] for i in range(n)]
        if name in categorical_columns:
            lv = tuple(sorted({v for v in column if v not in missing}))
            levels[name] = lv
            lookup = {v: float(k) for k, v in enumerate(lv)}
            for i, v in enumerate(column):
                if v not in missing:
                    feats[i, j] = lookup[v]
        else:
            for i, v in enumerate(column):
                if v in missing:
                    continue
                try:
                    feats[i, j] = float(v)
                except ValueError:
                    feats[i, j] = np.nan
    return Dataset(
        instance_ids=tuple(ids),
        features=feats,
        labels=labels,
        feature_names=tuple(names),
        categorical_levels=levels,
    )


def save_csv(
    dataset: Dataset,
    path: str | Path,
    label_column: str = "label",
    id_column: str = "id",
    label_values: tuple[str, str] = ("0", "1"),
) -> None:
    """Write a Dataset back to CSV with the load_csv header conventions.

    Factorized categorical columns are decoded back to their level strings;
    missing entries become empty cells.
    """
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([id_column, *dataset.feature_names, label_column])
        for i, iid in enumerate(dataset.instance_ids):
            row: list[str] = [iid]
            for j, name in enumerate(dataset.feature_names):
                v = dataset.features[i, j]
                if np.isnan(v):
                    row.append("")
                elif name in dataset.categorical_levels:
                    lv = dataset.categorical_levels[name]
                    row.append(lv[int(np.clip(np.rint(v), 0, len(lv) - 1))])
                else:
                    row.append(repr(float(v)))
            row.append(label_values[int(dataset.labels[i])])
            writer.writerow(row)


def one_hot_encode(dataset: Dataset, categorical_columns: Sequence[str]) -> Dataset:
    """Expand each named column into one binary column per observed level.

    Level order is lexicographic for factorized string columns (their levels
    were sorted at load time) and ascending numeric for raw numeric columns.
    A cell is assigned to its nearest level index, so fractional values left
    by mean imputation snap to the closest category. A single-level column
    is kept as one constant column with a warning. NaN cells propagate NaN
    across the expanded block. Row order is unchanged.
    """
    if not categorical_columns:
        return dataset
    for col in categorical_columns:
        if col not in dataset.feature_names:
            raise DataError(f"categorical column {col!r} not found")
    to_encode = set(categorical_columns)
    new_names: list[str] = []
    blocks: list[np.ndarray] = []
    new_levels = {
        k: v for k, v in dataset.categorical_levels.items() if k not in to_encode
    }
    for j, name in enumerate(dataset.feature_names):
        col = dataset.features[:, j]
        if name not in to_encode:
            new_names.append(name)
            blocks.append(col[:, None])
            continue
        if name in dataset.categorical_levels:
            level_names = list(dataset.categorical_levels[name])
            level_codes = np.arange(len(level_names), dtype=np.float64)
        else:
            observed = np.unique(col[~np.isnan(col)])
            level_codes = observed
            level_names = [
                str(int(v)) if float(v).is_integer() else repr(float(v))
                for v in observed
            ]
        k = len(level_names)
        if k == 0:
            raise DataError(f"column {name!r} has no observed values to encode")
        if k == 1:
            warnings.warn(
                f"one_hot_encode: column {name!r} has a single level; emitting one constant column",
                stacklevel=2,
            )
        block = np.full((dataset.n_instances, k), np.nan)
        valid = ~np.isnan(col)
        # nearest level: smallest absolute code distance, ties to the lower level
        dist = np.abs(col[valid, None] - level_codes[None, :])
        nearest = np.argmin(dist, axis=1)
        hot = np.zeros((int(valid.sum()), k))
        hot[np.arange(len(nearest)), nearest] = 1.0
        block[valid] = hot
        for lv in level_names:
            new_names.append(f"{name}={lv}")
        blocks.append(block)
    return Dataset(
        instance_ids=dataset.instance_ids,
        features=np.hstack(blocks),
        labels=dataset.labels,
        feature_names=tuple(new_names),
        categorical_levels=new_levels,
    )


def impute_knn(dataset: Dataset, k: int = 3) -> Dataset:
    """Fill each missing entry with the mean of that feature over the k
    nearest rows, where distance is Euclidean over mutually non-missing
    features (rows sharing no feature are skipped as neighbors).

    All fills are computed from the original missing pattern before any are
    applied, so the operation is idempotent. Complete rows are unchanged.
    """
    if k < 1:
        raise ConfigError("impute_knn: k must be >= 1")
    X = dataset.features
    miss = np.isnan(X)
    if not miss.any():
        return dataset
    n = dataset.n_instances
    if k > n - 1:
        warnings.warn(f"impute_knn: k={k} exceeds n-1={n - 1}; clamped", stacklevel=2)
        k = n - 1
    all_missing_cols = [
        dataset.feature_names[j] for j in range(dataset.n_features) if miss[:, j].all()
    ]
    if all_missing_cols:
        raise DataError(f"column unimputable (missing in all rows): {all_missing_cols}")

    filled = X.copy()
    rows_with_missing = np.where(miss.any(axis=1))[0]
    for i in rows_with_missing:
        shared = ~miss[i] & ~miss  # rows x features: usable for distance to row i
        diff = np.where(shared, X - X[i], 0.0)
        dist2 = np.sum(diff * diff, axis=1)
        dist2[i] = np.inf
        dist2[~shared.any(axis=1)] = np.inf  # no mutually observed feature
        for j in np.where(miss[i])[0]:
            ok = ~miss[:, j] & np.isfinite(dist2)
            cand = np.where(ok)[0]
            if cand.size == 0:
                raise DataError(
                    f"column unimputable for row {dataset.instance_ids[i]!r}: "
                    f"no usable neighbor observes {dataset.feature_names[j]!r}"
                )
            if cand.size < k:
                warnings.warn(
                    f"impute_knn: only {cand.size} usable neighbors (< k={k}) for "
                    f"row {dataset.instance_ids[i]!r}, column {dataset.feature_names[j]!r}",
                    stacklevel=2,
                )
            order = cand[np.argsort(dist2[cand], kind="stable")]
            chosen = order[: min(k, order.size)]
            filled[i, j] = float(np.mean(X[chosen, j]))
    return Dataset(
        instance_ids=dataset.instance_ids,
        features=filled,
        labels=dataset.labels,
        feature_names=dataset.feature_names,
        categorical_levels=dict(dataset.categorical_levels),
    )


def stratified_split(dataset: Dataset, ratio: float = 0.7, seed: int = 0) -> SplitPair:
    """Deterministic stratified split; rows keep their original order."""
    if not 0.0 < ratio < 1.0:
        raise DataError(
            "empty validation" if ratio >= 1.0 else "empty training"
        )
    n0, n1 = dataset.class_counts()
    if n0 < 2 or n1 < 2:
        raise DataError("stratified_split requires >= 2 instances per class")
    rng = rng_for(seed, "split")
    train_idx: list[int] = []
    val_idx: list[int] = []
    for cls in (0, 1):
        idx = np.where(dataset.labels == cls)[0]
        perm = rng.permutation(idx)
        n_train = int(len(idx) * ratio + 0.5)
        n_train = min(max(n_train, 1), len(idx) - 1)
        train_idx.extend(perm[:n_train].tolist())
        val_idx.extend(perm[n_train:].tolist())
    return SplitPair(
        train=dataset.subset(sorted(train_idx)),
        validation=dataset.subset(sorted(val_idx)),
        seed=seed,
        ratio=ratio,
    )


def stratified_fold_ids(
    labels: np.ndarray, n_folds: int, rng: np.random.Generator
) -> np.ndarray:
    """Assign every row a fold id in [0, n_folds) with per-class balance.

    Each class is shuffled then dealt round-robin, so fold sizes within a
    class differ by at most one and every fold's training side keeps both
    classes whenever each class has at least two instances.
    """
    labels = np.asarray(labels)
    if n_folds < 2:
        raise ConfigError("cross validation requires n_folds >= 2")
    out = np.empty(len(labels), dtype=np.int64)
    for cls in (0, 1):
        idx = np.where(labels == cls)[0]
        if len(idx) < 2:
            raise DataError("cross validation requires >= 2 instances per class")
        perm = rng.permutation(idx)
        out[perm] = np.arange(len(perm)) % n_folds
    return out


def undersample(dataset: Dataset, seed: int = 0) -> Dataset:
    """Randomly drop majority-class rows until both classes have
    min(n_0, n_1) instances. Balanced input is returned unchanged."""
    n0, n1 = dataset.class_counts()
    if n0 == 0 or n1 == 0:
        raise DataError("undersample requires both classes non-empty")
    if n0 == n1:
        return dataset
    minority = 0 if n0 < n1 else 1
    keep_min = np.where(dataset.labels == minority)[0]
    maj_idx = np.where(dataset.labels == 1 - minority)[0]
    rng = rng_for(seed, "undersample")
    keep_maj = rng.choice(maj_idx, size=len(keep_min), replace=False)
    return dataset.subset(sorted(np.concatenate([keep_min, keep_maj]).tolist()))


def maybe_undersample(
    dataset: Dataset, trigger_ratio: float = 0.6, seed: int = 0
) -> Dataset:
    """Undersample only when n_min / n_max <= trigger_ratio (inclusive)."""
    n0, n1 = dataset.class_counts()
    if n0 == 0 or n1 == 0:
        raise DataError("maybe_undersample requires both classes non-empty")
    if min(n0, n1) / max(n0, n1) <= trigger_ratio:
        return undersample(dataset, seed)
    return dataset


def _score_mapping(scores: object) -> Mapping[str, float]:
    if hasattr(scores, "scores"):
        return scores.scores  # HardnessScores-like
    if isinstance(scores, Mapping):
        return scores
    raise ConfigError("scores must be a HardnessScores or a mapping of id -> score")


def filter_by_hardness(
    dataset: Dataset,
    scores: object,
    t_f: float,
    mode: str = "fraction_per_class",
) -> Dataset:
    """Drop the hardest training instances.

    fraction_per_class mode removes, within each class, the ceil(t_f * n_class)
    highest-score instances (t_f in [0, 0.5]); score_threshold mode removes
    every instance whose score exceeds t_f (t_f in [0, 1]). Ties on equal
    score are broken by ascending instance id so removal is deterministic.
    Surviving rows keep their original order.
    """
    mapping = _score_mapping(scores)
    missing = [iid for iid in dataset.instance_ids if iid not in mapping]
    if missing:
        raise DataError(f"missing hardness score for instance ids: {missing[:5]}")
    if mode == "fraction_per_class":
        if not 0.0 <= t_f <= 0.5:
            raise ConfigError("fraction_per_class mode requires t_f in [0, 0.5]")
        drop: set[int] = set()
        for cls in (0, 1):
            idx = [i for i in range(dataset.n_instances) if dataset.labels[i] == cls]
            if not idx:
                continue
            # round before ceil to absorb binary float noise in t_f * n
            m = int(math.ceil(round(t_f * len(idx), 9)))
            if m == 0:
                continue
            ranked = sorted(
                idx,
                key=lambda i: (-float(mapping[dataset.instance_ids[i]]), dataset.instance_ids[i]),
            )
            drop.update(ranked[:m])
        keep = [i for i in range(dataset.n_instances) if i not in drop]
    elif mode == "score_threshold":
        if not 0.0 <= t_f <= 1.0:
            raise ConfigError("score_threshold mode requires t_f in [0, 1]")
        keep = [
            i
            for i in range(dataset.n_instances)
            if float(mapping[dataset.instance_ids[i]]) <= t_f
        ]
    else:
        raise ConfigError(f"unknown filter mode {mode!r}")
    return dataset.subset(keep)
