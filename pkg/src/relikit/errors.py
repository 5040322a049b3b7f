"""Error taxonomy shared by the library and the CLI.

The CLI maps these onto process exit codes: ConfigError -> 1,
DataError -> 2, NumericError -> 3. Library code raises the most
specific class that applies; anything else is a plain bug.
"""

from __future__ import annotations


class RelikitError(Exception):
    """Base class for all package errors."""


class ConfigError(RelikitError):
    """Invalid configuration: bad field values, unknown enums, bad files."""


class DataError(RelikitError):
    """Problem with input data: missing columns, label cardinality, empty sets."""


class NumericError(RelikitError):
    """Numerical failure: non-convergence, non-finite values, non-PD matrices."""
