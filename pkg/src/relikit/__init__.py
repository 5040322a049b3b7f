"""relikit: reliability toolkit for binary classifiers.

Two levers: drop hard training instances before fitting, and abstain from
low-confidence predictions at inference. Threshold pairs for both levers are
chosen by minimizing a weighted cost over performance, rejection rate, and
mean accepted score.
"""

from .errors import ConfigError, DataError, NumericError, RelikitError

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "NumericError",
    "RelikitError",
    "__version__",
]
