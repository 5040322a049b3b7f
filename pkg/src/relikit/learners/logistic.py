"""L2-regularized logistic regression fit by damped Newton iteration.

The parameter vector carries the bias as its last element; the penalty
(l2 / 2) * ||w||^2 covers only the non-bias weights. The gradient and
Hessian are exposed as standalone functions because influence estimation
differentiates the same objective.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericError
from .base import (
    LearnerSpec,
    TrainedModel,
    log_loss,
    register_learner,
    sigmoid,
    validate_fit_inputs,
)


def _augment(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((X.shape[0], 1))])


def logistic_loss(w: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float = 0.0) -> float:
    """Mean log loss plus (l2/2)||w_non_bias||^2. Bias is w[-1]."""
    Xa = _augment(np.asarray(X, dtype=np.float64))
    w = np.asarray(w, dtype=np.float64)
    p = sigmoid(Xa @ w)
    return log_loss(np.asarray(y, dtype=np.float64), p) + 0.5 * l2 * float(w[:-1] @ w[:-1])


def logistic_gradient(
    w: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float = 0.0
) -> np.ndarray:
    """Gradient of logistic_loss with respect to w (bias last, unpenalized)."""
    Xa = _augment(np.asarray(X, dtype=np.float64))
    w = np.asarray(w, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    p = sigmoid(Xa @ w)
    grad = Xa.T @ (p - y) / Xa.shape[0]
    reg = l2 * w
    reg[-1] = 0.0
    return grad + reg


def logistic_hessian(
    w: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float = 0.0
) -> np.ndarray:
    """Hessian of logistic_loss: (1/n) X'diag(p(1-p))X plus l2 on non-bias terms.

    y is accepted for signature symmetry with the gradient; the Hessian of
    the log loss does not depend on it.
    """
    del y
    Xa = _augment(np.asarray(X, dtype=np.float64))
    w = np.asarray(w, dtype=np.float64)
    p = sigmoid(Xa @ w)
    weight = p * (1.0 - p)
    H = (Xa * weight[:, None]).T @ Xa / Xa.shape[0]
    reg = np.full(len(w), l2)
    reg[-1] = 0.0
    return H + np.diag(reg)


def fit_logistic_weights(
    X: np.ndarray,
    y: np.ndarray,
    l2: float = 1e-4,
    max_iter: int = 100,
    tol: float = 1e-8,
) -> np.ndarray:
    """Newton iterations from the zero vector with step halving on overshoot."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.zeros(X.shape[1] + 1)
    loss = logistic_loss(w, X, y, l2)
    for _ in range(max_iter):
        grad = logistic_gradient(w, X, y, l2)
        if float(np.max(np.abs(grad))) < tol:
            break
        H = logistic_hessian(w, X, y, l2)
        step = None
        ridge = 0.0
        for _attempt in range(6):
            try:
                step = np.linalg.solve(H + ridge * np.eye(len(w)), grad)
                break
            except np.linalg.LinAlgError:
                ridge = 1e-8 if ridge == 0.0 else ridge * 100.0
        if step is None:
            raise NumericError("logistic Newton: Hessian solve failed")
        scale = 1.0
        for _halving in range(50):
            cand = w - scale * step
            cand_loss = logistic_loss(cand, X, y, l2)
            if cand_loss <= loss:
                w, loss = cand, cand_loss
                break
            scale *= 0.5
        else:
            break  # no descent possible; treat as converged
    return w


@register_learner
class LogisticModel(TrainedModel):
    kind = "logistic"

    def __init__(self, spec: LearnerSpec, n_features: int, weights: np.ndarray) -> None:
        super().__init__(spec, n_features)
        self.weights = np.asarray(weights, dtype=np.float64)

    @classmethod
    def fit(cls, spec: LearnerSpec, X: np.ndarray, y: np.ndarray, seed: int = 0) -> "LogisticModel":
        del seed  # deterministic optimizer
        X, y = validate_fit_inputs(X, y)
        w = fit_logistic_weights(
            X,
            y,
            l2=float(spec.get("l2", 1e-4)),
            max_iter=int(spec.get("max_iter", 100)),
            tol=float(spec.get("tol", 1e-8)),
        )
        return cls(spec, X.shape[1], w)

    def _proba(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(_augment(X) @ self.weights)

    def _state(self) -> dict:
        return {"weights": self.weights.tolist()}

    @classmethod
    def _from_state(cls, spec: LearnerSpec, n_features: int, state: dict) -> "LogisticModel":
        return cls(spec, n_features, np.array(state["weights"], dtype=np.float64))
