"""Gradient boosted trees with a second-order logistic objective.

Each round fits a regression tree to the gradient/curvature pairs of the
log loss at the current raw margin (g = p - y, h = p(1 - p)). Split quality
is the exact second-order gain

    0.5 * (GL^2/(HL + lam) + GR^2/(HR + lam) - G^2/(H + lam)) - gamma

and a leaf contributes -G/(H + lam) to the margin, scaled by the learning
rate. Margins start at zero. Row subsampling draws without replacement and
feature subsampling is per tree; both only affect which rows/columns can
form splits, while every boosting update applies to the full margin vector.
"""

from __future__ import annotations

import math

import numpy as np

from .._rng import rng_for
from .base import LearnerSpec, TrainedModel, register_learner, sigmoid, validate_fit_inputs
from .tree import tree_predict


def _best_gain_split(
    X: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    feature_indices: np.ndarray,
    reg_lambda: float,
    gamma: float,
    min_child_weight: float,
) -> tuple[int, float, float] | None:
    """Best (feature, threshold, gain) with gain > 0, or None.

    Ties resolve to the lowest feature index then the lowest threshold.
    """
    G = float(g.sum())
    H = float(h.sum())
    parent_term = G * G / (H + reg_lambda)
    best: tuple[float, int, float] | None = None
    for j in np.sort(feature_indices):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        gl = np.cumsum(g[order])[:-1]
        hl = np.cumsum(h[order])[:-1]
        ok = xs[:-1] != xs[1:]
        if not ok.any():
            continue
        gr = G - gl
        hr = H - hl
        ok &= (hl >= min_child_weight) & (hr >= min_child_weight)
        if not ok.any():
            continue
        gains = np.where(
            ok,
            0.5 * (gl * gl / (hl + reg_lambda) + gr * gr / (hr + reg_lambda) - parent_term)
            - gamma,
            -np.inf,
        )
        i = int(np.argmax(gains))  # first max -> lowest threshold
        if gains[i] > 0.0 and (best is None or gains[i] > best[0]):
            best = (float(gains[i]), int(j), float((xs[i] + xs[i + 1]) / 2.0))
    if best is None:
        return None
    return best[1], best[2], best[0]


def grow_gain_tree(
    X: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    feature_indices: np.ndarray,
    max_depth: int,
    reg_lambda: float,
    gamma: float,
    min_child_weight: float,
) -> dict:
    def build(idx: np.ndarray, depth: int) -> dict:
        G = float(g[idx].sum())
        H = float(h[idx].sum())
        leaf = {"leaf": -G / (H + reg_lambda)}
        if depth >= max_depth or len(idx) < 2:
            return leaf
        found = _best_gain_split(
            X[idx], g[idx], h[idx], feature_indices, reg_lambda, gamma, min_child_weight
        )
        if found is None:
            return leaf
        j, threshold, _ = found
        go_left = X[idx, j] <= threshold
        return {
            "feature": int(j),
            "threshold": threshold,
            "left": build(idx[go_left], depth + 1),
            "right": build(idx[~go_left], depth + 1),
        }

    return build(np.arange(X.shape[0]), 0)


@register_learner
class GradientBoostingModel(TrainedModel):
    kind = "gradient_boosting"

    def __init__(
        self,
        spec: LearnerSpec,
        n_features: int,
        trees: list[dict],
        learning_rate: float,
    ) -> None:
        super().__init__(spec, n_features)
        self.trees = trees
        self.learning_rate = float(learning_rate)

    @classmethod
    def fit(cls, spec: LearnerSpec, X: np.ndarray, y: np.ndarray, seed: int = 0) -> "GradientBoostingModel":
        X, yi = validate_fit_inputs(X, y)
        n, d = X.shape
        n_estimators = int(spec.get("n_estimators", 50))
        learning_rate = float(spec.get("learning_rate", 0.1))
        max_depth = int(spec.get("max_depth", 3))
        min_child_weight = float(spec.get("min_child_weight", 1.0))
        gamma = float(spec.get("gamma", 0.0))
        subsample = float(spec.get("subsample", 1.0))
        colsample = float(spec.get("colsample_bytree", 1.0))
        reg_lambda = float(spec.get("reg_lambda", 1.0))
        rng = rng_for(seed, "gradient_boosting")
        yf = yi.astype(np.float64)
        margin = np.zeros(n)
        trees: list[dict] = []
        n_rows = max(1, int(round(subsample * n)))
        n_cols = max(1, min(d, int(math.ceil(colsample * d))))
        for _ in range(n_estimators):
            p = sigmoid(margin)
            g = p - yf
            h = p * (1.0 - p)
            rows = rng.choice(n, size=n_rows, replace=False) if n_rows < n else np.arange(n)
            cols = rng.choice(d, size=n_cols, replace=False) if n_cols < d else np.arange(d)
            tree = grow_gain_tree(
                X[rows], g[rows], h[rows], cols, max_depth, reg_lambda, gamma, min_child_weight
            )
            trees.append(tree)
            margin = margin + learning_rate * tree_predict(tree, X)
        return cls(spec, d, trees, learning_rate)

    def raw_margin(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        margin = np.zeros(X.shape[0])
        for tree in self.trees:
            margin += self.learning_rate * tree_predict(tree, X)
        return margin

    def _proba(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(self.raw_margin(X))

    def _state(self) -> dict:
        return {"trees": self.trees, "learning_rate": self.learning_rate}

    @classmethod
    def _from_state(cls, spec: LearnerSpec, n_features: int, state: dict) -> "GradientBoostingModel":
        return cls(spec, n_features, state["trees"], state["learning_rate"])
