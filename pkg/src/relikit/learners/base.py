"""Shared learner interfaces: specs, trained-model contract, serialization.

Every learner here is implemented from first principles on numpy. A learner
is named by a LearnerSpec (kind + hyperparameters); fitting one yields a
TrainedModel that predicts p(label = 1) for complete feature matrices.
Models serialize to a versioned JSON document and load back exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import ConfigError, DataError

FORMAT_VERSION = 1


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_loss(y: np.ndarray, p: np.ndarray) -> float:
    """Mean negative log likelihood with probabilities clipped away from 0/1."""
    p = np.clip(np.asarray(p, dtype=np.float64), 1e-12, 1.0 - 1e-12)
    y = np.asarray(y, dtype=np.float64)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def validate_fit_inputs(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2:
        raise DataError("feature matrix must be 2-D")
    if y.shape != (X.shape[0],):
        raise DataError("labels must be 1-D and match the row count")
    if np.isnan(X).any():
        raise DataError("fit requires a complete matrix; impute missing values first")
    if not np.isin(y, (0, 1)).all():
        raise DataError("labels must take values in {0, 1}")
    if len(np.unique(y)) < 2:
        raise DataError("fit requires both classes present")
    return X, y.astype(np.int64)


@dataclass(frozen=True)
class LearnerSpec:
    """Names a learner family plus its hyperparameters."""

    kind: str
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "params", dict(self.params))

    def get(self, key: str, default: object) -> object:
        return self.params.get(key, default)


class TrainedModel:
    """Base class for fitted models.

    Subclasses set self.spec and self.n_features during fit and implement
    _proba plus the _state/_from_state serialization hooks.
    """

    kind: str = ""

    def __init__(self, spec: LearnerSpec, n_features: int) -> None:
        self.spec = spec
        self.n_features = int(n_features)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """p(label = 1) for each row of X."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DataError(
                f"expected matrix with {self.n_features} feature columns, got shape {X.shape}"
            )
        if np.isnan(X).any():
            raise DataError("predict_proba requires a complete matrix")
        return np.clip(self._proba(X), 0.0, 1.0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Hard labels at the 0.5 probability cut; ties go to the positive class."""
        return (self.predict_proba(X) >= 0.5).astype(np.int64)

    def _proba(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _state(self) -> dict:
        raise NotImplementedError

    @classmethod
    def _from_state(cls, spec: LearnerSpec, n_features: int, state: dict) -> "TrainedModel":
        raise NotImplementedError


_REGISTRY: dict[str, type[TrainedModel]] = {}


def register_learner(cls: type[TrainedModel]) -> type[TrainedModel]:
    if not cls.kind:
        raise ValueError("learner class must set a kind")
    _REGISTRY[cls.kind] = cls
    return cls


def model_class(kind: str) -> type[TrainedModel]:
    if kind not in _REGISTRY:
        raise ConfigError(
            f"unknown learner kind {kind!r}; available: {sorted(_REGISTRY)}"
        )
    return _REGISTRY[kind]


def model_to_doc(model: TrainedModel) -> dict:
    """JSON-ready snapshot of a fitted model."""
    return {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "params": dict(model.spec.params),
        "n_features": model.n_features,
        "state": model._state(),
    }


def model_from_doc(doc: dict) -> TrainedModel:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(
            f"unsupported model format_version {version!r} (expected {FORMAT_VERSION})"
        )
    cls = model_class(doc["kind"])
    spec = LearnerSpec(kind=doc["kind"], params=doc.get("params", {}))
    return cls._from_state(spec, int(doc["n_features"]), doc["state"])


def save_model(model: TrainedModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_doc(model)), encoding="utf-8")


def load_model(path: str | Path) -> TrainedModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    return model_from_doc(doc)
