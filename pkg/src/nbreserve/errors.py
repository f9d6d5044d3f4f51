"""Exception types shared across the package.

Every error carries a short machine-readable ``kind`` string (the class
name without the ``Error`` suffix) so the command line tools can emit
structured error reports.
"""

from __future__ import annotations


class ReservingError(Exception):
    """Base class for all errors raised by this package."""

    @property
    def kind(self) -> str:
        name = type(self).__name__
        return name[:-5] if name.endswith("Error") else name


class TriangleError(ReservingError):
    """Invalid triangle data or layout."""


class RaggedRowsError(TriangleError):
    """Rows of inconsistent length, or a non-square triangle."""


class NegativeCountError(TriangleError):
    """A cell holds a negative count."""


class NonIntegerCountError(TriangleError):
    """A cell holds a non-integer value and rounding was not requested."""


class MissingCellError(TriangleError):
    """An observed cell (accident year i, development year j with i + j <= I) is absent."""


class FutureCellError(TriangleError):
    """A future cell (i + j > I) holds a value."""


class ZeroColumnSumError(ReservingError):
    """A development-factor denominator column sums to zero."""


class SeparationError(ReservingError):
    """A factor level has all-zero counts, so its coefficient diverges."""


class RankDeficientError(ReservingError):
    """The design matrix is rank deficient (for example a missing factor level)."""


class NotConvergedError(ReservingError):
    """Iterative fitting failed to converge within the iteration budget."""


class FlatProfileError(ReservingError):
    """The profile log-likelihood has no usable curvature at its optimum."""


class SingularInformationError(ReservingError):
    """The observed information matrix is singular where a determinant is needed."""


class BaseFitFailedError(ReservingError):
    """The base model fit behind a bootstrap run failed."""


class ExcessiveFailuresError(ReservingError):
    """Too large a share of bootstrap replicates failed to refit."""


class TooFewDrawsError(ReservingError):
    """Not enough bootstrap draws to support the requested summary."""


class ConfigError(ReservingError):
    """Invalid simulation or command configuration."""
