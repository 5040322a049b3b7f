"""Bagged ensemble of Gini trees with per-node feature subsampling."""

from __future__ import annotations

import math

import numpy as np

from .._rng import rng_for
from .base import LearnerSpec, TrainedModel, register_learner, validate_fit_inputs
from .tree import grow_gini_tree, tree_predict


@register_learner
class RandomForestModel(TrainedModel):
    kind = "random_forest"

    def __init__(self, spec: LearnerSpec, n_features: int, trees: list[dict]) -> None:
        super().__init__(spec, n_features)
        self.trees = trees

    @classmethod
    def fit(cls, spec: LearnerSpec, X: np.ndarray, y: np.ndarray, seed: int = 0) -> "RandomForestModel":
        X, y = validate_fit_inputs(X, y)
        n, d = X.shape
        n_trees = int(spec.get("n_trees", 25))
        max_depth = int(spec.get("max_depth", 25))
        min_samples_split = int(spec.get("min_samples_split", 2))
        min_samples_leaf = int(spec.get("min_samples_leaf", 1))
        max_features = spec.get("max_features", "sqrt")
        if max_features == "sqrt":
            k = max(1, int(math.isqrt(d)))
        elif max_features is None:
            k = d
        else:
            k = max(1, min(d, int(max_features)))
        rng = rng_for(seed, "random_forest")
        trees = []
        for _ in range(n_trees):
            boot = rng.integers(0, n, size=n)
            # a bootstrap draw can be single-class; grow_gini_tree then
            # yields a bare leaf, which is a valid (constant) member
            trees.append(
                grow_gini_tree(
                    X[boot],
                    y[boot],
                    max_depth=max_depth,
                    min_samples_split=min_samples_split,
                    min_samples_leaf=min_samples_leaf,
                    rng=rng,
                    max_features=k,
                )
            )
        return cls(spec, d, trees)

    def _proba(self, X: np.ndarray) -> np.ndarray:
        votes = np.stack([tree_predict(t, X) for t in self.trees])
        return votes.mean(axis=0)

    def _state(self) -> dict:
        return {"trees": self.trees}

    @classmethod
    def _from_state(cls, spec: LearnerSpec, n_features: int, state: dict) -> "RandomForestModel":
        return cls(spec, n_features, state["trees"])
