"""Binary classification tree grown greedily on the Gini criterion.

Splits are axis-aligned with rows going left when x <= threshold; candidate
thresholds are midpoints between consecutive distinct feature values. Ties
in impurity reduction resolve to the lowest feature index, then the lowest
threshold, so the grown tree is a deterministic function of the data.
"""

from __future__ import annotations

import numpy as np

from .base import LearnerSpec, TrainedModel, register_learner, validate_fit_inputs


def _gini(n_pos: float, n: float) -> float:
    if n <= 0:
        return 0.0
    p = n_pos / n
    return 2.0 * p * (1.0 - p)


def best_gini_split(
    X: np.ndarray,
    y: np.ndarray,
    feature_indices: np.ndarray,
    min_samples_leaf: int,
) -> tuple[int, float, float] | None:
    """Return (feature, threshold, impurity_decrease) or None when no split helps."""
    n = len(y)
    total_pos = float(y.sum())
    parent = _gini(total_pos, n)
    best: tuple[float, int, float] | None = None  # (decrease, feature, threshold)
    for j in np.sort(feature_indices):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        ys = y[order]
        pos_prefix = np.cumsum(ys)
        # candidate boundary after position i (1-based left size i+1)
        for i in range(n - 1):
            if xs[i] == xs[i + 1]:
                continue
            n_left = i + 1
            n_right = n - n_left
            if n_left < min_samples_leaf or n_right < min_samples_leaf:
                continue
            left_pos = float(pos_prefix[i])
            child = (n_left / n) * _gini(left_pos, n_left) + (n_right / n) * _gini(
                total_pos - left_pos, n_right
            )
            decrease = parent - child
            if decrease > 1e-15 and (best is None or decrease > best[0] + 1e-15):
                best = (decrease, int(j), float((xs[i] + xs[i + 1]) / 2.0))
    if best is None:
        return None
    return best[1], best[2], best[0]


def grow_gini_tree(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: int,
    min_samples_split: int,
    min_samples_leaf: int,
    rng: np.random.Generator | None = None,
    max_features: int | None = None,
) -> dict:
    """Recursive builder; when rng and max_features are given, each node
    considers a fresh feature subsample (the random-forest variant)."""

    def build(idx: np.ndarray, depth: int) -> dict:
        ys = y[idx]
        n = len(idx)
        n_pos = int(ys.sum())
        leaf = {"leaf": n_pos / n, "n": n}
        if depth >= max_depth or n < min_samples_split or n_pos in (0, n):
            return leaf
        if rng is not None and max_features is not None and max_features < X.shape[1]:
            feats = rng.choice(X.shape[1], size=max_features, replace=False)
        else:
            feats = np.arange(X.shape[1])
        found = best_gini_split(X[idx], ys, feats, min_samples_leaf)
        if found is None:
            return leaf
        j, threshold, _ = found
        go_left = X[idx, j] <= threshold
        return {
            "feature": j,
            "threshold": threshold,
            "left": build(idx[go_left], depth + 1),
            "right": build(idx[~go_left], depth + 1),
        }

    return build(np.arange(len(y)), 0)


def tree_predict(node: dict, X: np.ndarray) -> np.ndarray:
    """Evaluate a nested-dict tree for every row of X."""
    out = np.empty(X.shape[0])

    def walk(sub: dict, mask: np.ndarray) -> None:
        if not mask.any():
            return
        if "leaf" in sub:
            out[mask] = sub["leaf"]
            return
        go_left = X[:, sub["feature"]] <= sub["threshold"]
        walk(sub["left"], mask & go_left)
        walk(sub["right"], mask & ~go_left)

    walk(node, np.ones(X.shape[0], dtype=bool))
    return out


@register_learner
class DecisionTreeModel(TrainedModel):
    kind = "tree"

    def __init__(self, spec: LearnerSpec, n_features: int, root: dict) -> None:
        super().__init__(spec, n_features)
        self.root = root

    @classmethod
    def fit(cls, spec: LearnerSpec, X: np.ndarray, y: np.ndarray, seed: int = 0) -> "DecisionTreeModel":
        del seed  # deterministic builder
        X, y = validate_fit_inputs(X, y)
        root = grow_gini_tree(
            X,
            y,
            max_depth=int(spec.get("max_depth", 25)),
            min_samples_split=int(spec.get("min_samples_split", 2)),
            min_samples_leaf=int(spec.get("min_samples_leaf", 1)),
        )
        return cls(spec, X.shape[1], root)

    def _proba(self, X: np.ndarray) -> np.ndarray:
        return tree_predict(self.root, X)

    def _state(self) -> dict:
        return {"root": self.root}

    @classmethod
    def _from_state(cls, spec: LearnerSpec, n_features: int, state: dict) -> "DecisionTreeModel":
        return cls(spec, n_features, state["root"])
