"""Exception hierarchy shared by the koofu modules.

Every exception carries the process exit code the command line surface
reports for it, so harnesses can tell validation failures from numeric ones.
"""

from __future__ import annotations

EXIT_OK: int = 0
EXIT_VALIDATION: int = 2
EXIT_NUMERIC: int = 3
EXIT_IO: int = 4


class KoofuError(Exception):
    """Base class of all koofu errors."""

    exit_code: int = 1


class ValidationError(KoofuError, ValueError):
    """Inputs violate a precondition (shapes, ranges, flag combinations)."""

    exit_code: int = EXIT_VALIDATION


class DimensionMismatchError(ValidationError):
    """Two operands disagree on their embedding dimension."""


class LabelRangeError(ValidationError):
    """A class id falls outside the class table."""


class TooFewClassesError(ValidationError):
    """Fitting requires at least two non-empty classes."""


class RankExceededError(ValidationError):
    """Requested more discriminant directions than the scatter rank allows."""


class EmptyClassError(ValidationError):
    """A class with no samples was requested explicitly."""


class ShapeError(ValidationError):
    """A serialized or in-memory object has inconsistent shapes."""


class NumericError(KoofuError, ArithmeticError):
    """A numerical procedure cannot produce a valid result."""

    exit_code: int = EXIT_NUMERIC


class NonPositiveEigenvalueError(NumericError):
    """The regularized scatter is not positive definite.

    Parameters
    ----------
    min_eig : float
        Smallest eigenvalue of the regularized matrix.
    threshold : float
        Positivity threshold the eigenvalue failed to clear.
    suggested_lambda : float
        Smallest shrinkage (two significant digits, rounded up) that clears the
        threshold.
    """

    def __init__(self, min_eig: float, threshold: float, suggested_lambda: float) -> None:
        self.min_eig: float = min_eig
        self.threshold: float = threshold
        self.suggested_lambda: float = suggested_lambda
        error_message: str = (
            f"Regularized scatter is not positive definite: min eigenvalue {min_eig:.6g} <= {threshold:.6g}.\n"
            f"Hint: use a shrinkage of at least {suggested_lambda:g}."
        )
        super().__init__(error_message)


class FormatError(KoofuError, OSError):
    """A file does not follow its binary or text format."""

    exit_code: int = EXIT_IO


class ProtocolError(KoofuError):
    """An evaluation protocol failed in a named stage.

    Parameters
    ----------
    stage : str
        Name of the failing stage (``load``, ``fit``, ``transform``, ...).
    cause : Exception
        The underlying error.
    """

    def __init__(self, stage: str, cause: Exception) -> None:
        self.stage: str = stage
        self.cause: Exception = cause
        super().__init__(f"Protocol failed in stage '{stage}': {cause}")

    @property
    def exit_code(self) -> int:  # type: ignore[override]
        """Exit code of the wrapped error."""
        return exit_code_for(self.cause)


def exit_code_for(error: BaseException) -> int:
    """Map an exception to a process exit code.

    Parameters
    ----------
    error : BaseException
        The raised exception.

    Returns
    -------
    int
        2 for validation errors, 3 for numeric failures, 4 for I/O and format
        errors, 1 otherwise.
    """
    if isinstance(error, KoofuError):
        return error.exit_code
    if isinstance(error, OSError):
        return EXIT_IO
    return 1
