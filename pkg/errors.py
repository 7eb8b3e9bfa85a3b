"""
Exception hierarchy for fsadapt.

The CLI maps these to exit codes (see constants.EXIT_*). Errors describing a
bad value also derive from ValueError so callers can catch them generically.
"""

from typing import Iterable, Optional


class FsAdaptError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(FsAdaptError, ValueError):
    """Shapes are incompatible for the requested operation."""


class DomainError(FsAdaptError, ValueError):
    """An input lies outside the mathematical domain of an operation."""


class ContractError(FsAdaptError, ValueError):
    """A precondition of an operation was violated by the caller."""


class NumericError(FsAdaptError, ArithmeticError):
    """A computation produced or received a non-finite or degenerate value."""


class InputError(FsAdaptError, ValueError):
    """User-supplied text or data is unusable."""


class TaskError(FsAdaptError, ValueError):
    """A few-shot task cannot be used for the requested operation."""


class EvaluationError(FsAdaptError):
    """An evaluation could not produce a result."""


class DegenerateClassError(EvaluationError):
    """A class has only positive or only negative labels in the evaluated set."""


class VerificationFailure(FsAdaptError):
    """A verification gate (e.g. gradient check) did not pass."""


class ConfigError(FsAdaptError, ValueError):
    """
    Invalid configuration.

    Carries every violation found so a single run reports all of them.
    """

    def __init__(self, violations: Iterable[str] | str):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations) or "invalid configuration")


class OutputExistsError(FsAdaptError, FileExistsError):
    """Refusal to overwrite an existing output without --force."""


class FormatError(FsAdaptError, ValueError):
    """A file does not match its documented format."""

    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class UnsupportedVersionError(FormatError):
    """A file declares a format version this build cannot read."""
