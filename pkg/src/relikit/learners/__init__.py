"""Model zoo: six numpy-only learners behind one spec/fit/predict contract.

fit() dispatches a LearnerSpec to its implementation; default_pool() is the
heterogeneous committee used for consensus hardness scoring; MainModelConfig
pins the boosted-tree configuration of the deployable classifier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import (
    FORMAT_VERSION,
    LearnerSpec,
    TrainedModel,
    load_model,
    log_loss,
    model_class,
    save_model,
    sigmoid,
)
from .boosting import GradientBoostingModel, grow_gain_tree
from .forest import RandomForestModel
from .knn import KnnModel
from .logistic import (
    LogisticModel,
    fit_logistic_weights,
    logistic_gradient,
    logistic_hessian,
    logistic_loss,
)
from .naive_bayes import GaussianNaiveBayesModel
from .tree import DecisionTreeModel

__all__ = [
    "FORMAT_VERSION",
    "LearnerSpec",
    "TrainedModel",
    "MainModelConfig",
    "fit",
    "fit_main_model",
    "default_pool",
    "save_model",
    "load_model",
    "sigmoid",
    "log_loss",
    "logistic_loss",
    "logistic_gradient",
    "logistic_hessian",
    "fit_logistic_weights",
    "LogisticModel",
    "DecisionTreeModel",
    "RandomForestModel",
    "GradientBoostingModel",
    "KnnModel",
    "GaussianNaiveBayesModel",
    "grow_gain_tree",
]


def fit(spec: LearnerSpec, X: np.ndarray, y: np.ndarray, seed: int = 0) -> TrainedModel:
    """Fit the learner named by spec on a complete matrix with binary labels."""
    return model_class(spec.kind).fit(spec, X, y, seed=seed)


def default_pool() -> tuple[LearnerSpec, ...]:
    """The heterogeneous committee for consensus hardness estimation."""
    return (
        LearnerSpec("logistic"),
        LearnerSpec("tree", {"max_depth": 10}),
        LearnerSpec("random_forest", {"n_trees": 25}),
        LearnerSpec("gradient_boosting", {"n_estimators": 50, "max_depth": 3}),
        LearnerSpec("knn", {"k": 5}),
        LearnerSpec("naive_bayes"),
    )


@dataclass(frozen=True)
class MainModelConfig:
    """Boosted-tree settings for the deployable classifier.

    Defaults are the production values; n_estimators=200 is a reasonable
    reduction when iterating at a desk. reg_lambda stays at the engine's
    standard 1.0 leaf regularization.
    """

    learning_rate: float = 0.01
    n_estimators: int = 1000
    max_depth: int = 8
    min_child_weight: float = 1.0
    gamma: float = 0.0
    subsample: float = 0.8
    colsample_bytree: float = 0.8
    reg_lambda: float = 1.0
    seed: int = 27

    def to_spec(self) -> LearnerSpec:
        return LearnerSpec(
            "gradient_boosting",
            {
                "learning_rate": self.learning_rate,
                "n_estimators": self.n_estimators,
                "max_depth": self.max_depth,
                "min_child_weight": self.min_child_weight,
                "gamma": self.gamma,
                "subsample": self.subsample,
                "colsample_bytree": self.colsample_bytree,
                "reg_lambda": self.reg_lambda,
            },
        )


def fit_main_model(
    X: np.ndarray, y: np.ndarray, config: MainModelConfig | None = None
) -> GradientBoostingModel:
    """Train the deployable boosted-tree classifier."""
    config = config or MainModelConfig()
    model = fit(config.to_spec(), X, y, seed=config.seed)
    assert isinstance(model, GradientBoostingModel)
    return model
