"""k-nearest-neighbor classifier over Euclidean distance.

The predicted probability is the unsmoothed positive fraction among the k
nearest training rows; distance ties resolve by training-row order via a
stable sort, so predictions are deterministic.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from .base import LearnerSpec, TrainedModel, register_learner, validate_fit_inputs


@register_learner
class KnnModel(TrainedModel):
    kind = "knn"

    def __init__(self, spec: LearnerSpec, n_features: int, X: np.ndarray, y: np.ndarray, k: int) -> None:
        super().__init__(spec, n_features)
        self.train_X = np.asarray(X, dtype=np.float64)
        self.train_y = np.asarray(y, dtype=np.int64)
        self.k = int(k)

    @classmethod
    def fit(cls, spec: LearnerSpec, X: np.ndarray, y: np.ndarray, seed: int = 0) -> "KnnModel":
        del seed  # memorizing learner
        X, y = validate_fit_inputs(X, y)
        k = int(spec.get("k", 5))
        if k < 1:
            raise ConfigError("knn: k must be >= 1")
        return cls(spec, X.shape[1], X, y, min(k, X.shape[0]))

    def _proba(self, X: np.ndarray) -> np.ndarray:
        diff = X[:, None, :] - self.train_X[None, :, :]
        dist2 = np.einsum("ijk,ijk->ij", diff, diff)
        order = np.argsort(dist2, axis=1, kind="stable")[:, : self.k]
        return self.train_y[order].mean(axis=1)

    def _state(self) -> dict:
        return {
            "train_X": self.train_X.tolist(),
            "train_y": self.train_y.tolist(),
            "k": self.k,
        }

    @classmethod
    def _from_state(cls, spec: LearnerSpec, n_features: int, state: dict) -> "KnnModel":
        return cls(
            spec,
            n_features,
            np.array(state["train_X"], dtype=np.float64),
            np.array(state["train_y"], dtype=np.int64),
            state["k"],
        )
