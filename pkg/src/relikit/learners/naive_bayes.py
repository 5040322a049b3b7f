"""Gaussian naive Bayes with a variance floor for constant features."""

from __future__ import annotations

import numpy as np

from .base import LearnerSpec, TrainedModel, register_learner, validate_fit_inputs

VARIANCE_FLOOR = 1e-9


@register_learner
class GaussianNaiveBayesModel(TrainedModel):
    kind = "naive_bayes"

    def __init__(
        self,
        spec: LearnerSpec,
        n_features: int,
        means: np.ndarray,
        variances: np.ndarray,
        log_priors: np.ndarray,
    ) -> None:
        super().__init__(spec, n_features)
        self.means = np.asarray(means, dtype=np.float64)          # (2, d)
        self.variances = np.asarray(variances, dtype=np.float64)  # (2, d)
        self.log_priors = np.asarray(log_priors, dtype=np.float64)

    @classmethod
    def fit(cls, spec: LearnerSpec, X: np.ndarray, y: np.ndarray, seed: int = 0) -> "GaussianNaiveBayesModel":
        del seed
        X, y = validate_fit_inputs(X, y)
        means = np.empty((2, X.shape[1]))
        variances = np.empty((2, X.shape[1]))
        log_priors = np.empty(2)
        for c in (0, 1):
            rows = X[y == c]
            means[c] = rows.mean(axis=0)
            variances[c] = np.maximum(rows.var(axis=0), VARIANCE_FLOOR)
            log_priors[c] = np.log(len(rows) / len(y))
        return cls(spec, X.shape[1], means, variances, log_priors)

    def _proba(self, X: np.ndarray) -> np.ndarray:
        joint = np.empty((X.shape[0], 2))
        for c in (0, 1):
            ll = -0.5 * (
                np.log(2.0 * np.pi * self.variances[c])
                + (X - self.means[c]) ** 2 / self.variances[c]
            ).sum(axis=1)
            joint[:, c] = self.log_priors[c] + ll
        shift = joint.max(axis=1, keepdims=True)
        norm = np.exp(joint - shift)
        return norm[:, 1] / norm.sum(axis=1)

    def _state(self) -> dict:
        return {
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "log_priors": self.log_priors.tolist(),
        }

    @classmethod
    def _from_state(cls, spec: LearnerSpec, n_features: int, state: dict) -> "GaussianNaiveBayesModel":
        return cls(
            spec,
            n_features,
            np.array(state["means"]),
            np.array(state["variances"]),
            np.array(state["log_priors"]),
        )
