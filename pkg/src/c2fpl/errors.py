"""Exception types shared across the pipeline.

Every error carries a CLI exit code and a short machine-readable kind so the
command line tool can report failures on a single line.
"""

from __future__ import annotations


class C2FPLError(Exception):
    """Base class for pipeline errors."""

    exit_code = 1
    kind = "error"


class DataInvariantError(C2FPLError):
    """Inputs violate a structural requirement (mismatched ids, bad labels)."""

    exit_code = 4
    kind = "data"


class BundleFormatError(DataInvariantError):
    """A feature bundle (in memory or on disk) is not well formed."""


class MalformedHeaderError(BundleFormatError):
    """Bundle bytes do not start with a valid header or video record."""


class DimensionMismatchError(BundleFormatError):
    """Feature block size disagrees with the declared dimensions."""


class NonFiniteValueError(BundleFormatError):
    """A feature value is NaN or infinite."""


class DuplicateVideoIdError(BundleFormatError):
    """Two videos in one bundle share an id."""


class NumericError(C2FPLError):
    """Numerically degenerate input for an otherwise valid request."""

    exit_code = 5
    kind = "numeric"


class InsufficientDataError(NumericError):
    """Too few points or segments for the requested fit."""


class DegenerateSplitError(NumericError):
    """A two-component split cannot be formed (for example identical points)."""


class UndefinedAucError(NumericError):
    """ROC-AUC is undefined because one class is empty."""
