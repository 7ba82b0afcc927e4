"""Exception types shared across the package.

Errors are grouped loosely by how the command line reports them:
configuration mistakes (bad flags, impossible settings), data problems
(malformed files, non-finite values), and runtime failures.
"""
from __future__ import annotations

__all__ = [
    "CtxensError",
    "ConfigError",
    "DataError",
    "EmptyDatasetError",
    "NonFiniteValueError",
    "LabelLengthMismatchError",
    "LabelDomainError",
    "MissingLabelsError",
    "DegenerateClassError",
    "SingleClassError",
    "ParseError",
    "MissingColumnError",
    "InfeasibleSpecError",
    "InfeasibleFractionError",
    "DimensionTooSmallError",
    "DimensionTooLargeError",
    "DimensionMismatchError",
    "RankDeficientWarning",
    "EmptyPoolError",
    "PoolExhaustedError",
    "BudgetExceedsPoolError",
    "QueryMismatchError",
    "SessionNotFoundError",
    "SessionStateError",
]


class CtxensError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(CtxensError):
    """A setting or flag combination that can never work."""


class DataError(CtxensError):
    """Input data that cannot be used as-is."""


# --- dataset validation ----------------------------------------------------

class EmptyDatasetError(DataError):
    pass


class NonFiniteValueError(DataError):
    """A NaN or infinity in the feature matrix. Records where it was found."""

    def __init__(self, row: int, col: int):
        self.row = row
        self.col = col
        super().__init__(f"non-finite feature value at row {row}, column {col}")


class LabelLengthMismatchError(DataError):
    def __init__(self, n_rows: int, n_labels: int):
        self.n_rows = n_rows
        self.n_labels = n_labels
        super().__init__(f"{n_labels} labels for {n_rows} rows")


class LabelDomainError(DataError):
    """Labels must be 0 (normal) or 1 (anomaly)."""


class MissingLabelsError(DataError):
    pass


class DegenerateClassError(DataError):
    """An operation that needs both classes got only one."""


class SingleClassError(DataError):
    """Ranking metrics are undefined when one class is absent."""


# --- file loading / generation ---------------------------------------------

class ParseError(DataError):
    def __init__(self, line: int, column: int, detail: str = ""):
        self.line = line
        self.column = column
        msg = f"cannot parse value at line {line}, column {column}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class MissingColumnError(DataError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"required column {name!r} not found in header")


class InfeasibleSpecError(ConfigError):
    """A generator spec whose numbers cannot be satisfied."""


class InfeasibleFractionError(InfeasibleSpecError):
    """An injection fraction outside [0, 1]."""


# --- context space ----------------------------------------------------------

class DimensionTooSmallError(ConfigError):
    """Fewer than two features leaves nothing to split into context/behavior."""


class DimensionTooLargeError(ConfigError):
    """Too many features to enumerate every bipartition; reduce first."""


class DimensionMismatchError(DataError):
    pass


class RankDeficientWarning(UserWarning):
    """Requested more principal components than the data supports."""


# --- active learning --------------------------------------------------------

class EmptyPoolError(ConfigError):
    pass


class PoolExhaustedError(CtxensError):
    """No unqueried candidates remain but the budget is not spent."""


class BudgetExceedsPoolError(ConfigError):
    def __init__(self, budget: int, pool_size: int):
        self.budget = budget
        self.pool_size = pool_size
        super().__init__(f"budget {budget} exceeds pool of {pool_size} samples")


# --- labeling sessions -------------------------------------------------------

class QueryMismatchError(CtxensError):
    """A label arrived for a sample that is not the pending query."""


class SessionNotFoundError(CtxensError):
    pass


class SessionStateError(CtxensError):
    """The session is not in a state where the request makes sense."""
