"""Exception types raised across the toolkit.

Everything derives from :class:`RewardKitError` so callers can catch the
whole family with one clause.  Errors that are really value errors also
inherit :class:`ValueError` to stay friendly to generic handling.
"""

from __future__ import annotations


class RewardKitError(Exception):
    """Base class for all toolkit errors."""


class ManifestParseError(RewardKitError, ValueError):
    """A manifest file could not be parsed.

    ``line_no`` is the 1-based line number of the offending line, or None
    when the problem is file-level (for example an empty file).
    """

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class DatasetValidationError(RewardKitError, ValueError):
    """A dataset violated one or more structural invariants.

    ``violations`` holds the full list of Violation entries.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"{len(self.violations)} validation violation(s): {lines}")


class StoreFormatError(RewardKitError, ValueError):
    """An embedding store file is malformed (bad magic, version, payload)."""


class StoreTruncatedError(StoreFormatError):
    """An embedding store file ended before its declared payload.

    ``offset`` is the byte offset at which the file ran out.
    """

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")


class MissingEmbeddingError(RewardKitError, KeyError):
    """A record id has no row in the embedding store."""


class EmptyInputError(RewardKitError, ValueError):
    """An operation that needs at least one element received none."""


class DegenerateCorrelationError(RewardKitError, ValueError):
    """Rank correlation is undefined for the given inputs (constant vector)."""


class DivergenceError(RewardKitError, ArithmeticError):
    """Training produced a non-finite loss; lower the learning rate."""


class SingularSystemError(RewardKitError, ValueError):
    """The unregularized normal equations are singular; use alpha > 0."""


class UsageError(RewardKitError):
    """Bad command-line usage (unknown flag, malformed value)."""
