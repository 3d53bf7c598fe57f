"""Library for utility functions used across the koofu modules."""

from __future__ import annotations

import math
import os
from typing import TYPE_CHECKING

import numpy as np
from tabulate import tabulate

from koofu.errors import DimensionMismatchError, ValidationError

if TYPE_CHECKING:
    import logging
    from collections.abc import Iterable, Mapping

THREADS_ENV: str = "KOOFU_THREADS"


def resolve_threads(threads: int | None = None) -> int:
    """Resolve the number of worker threads.

    Parameters
    ----------
    threads : int, optional
        Explicit thread count. When None, the ``KOOFU_THREADS`` environment
        variable is used, then the number of available cores.

    Returns
    -------
    int
        A positive thread count.

    Raises
    ------
    ValidationError
        If the requested count is not a positive integer.
    """
    if threads is None:
        env_value: str | None = os.environ.get(THREADS_ENV)
        if env_value is None:
            return os.cpu_count() or 1
        try:
            threads = int(env_value)
        except ValueError as e:
            error_message: str = f"Invalid {THREADS_ENV}={env_value!r}.\nHint: set it to a positive integer."
            raise ValidationError(error_message) from e

    if threads <= 0:
        error_message = f"Invalid thread count: {threads}.\nHint: threads should be a positive integer."
        raise ValidationError(error_message)
    return threads


def round_up_significant(value: float, digits: int = 2) -> float:
    """Round a positive value up to the given number of significant digits.

    The result is strictly greater than ``value``.

    Parameters
    ----------
    value : float
        The value to round.
    digits : int, optional
        Number of significant digits (default is 2).

    Returns
    -------
    float
        The rounded value.
    """
    if value <= 0:
        return 0.0
    scale: float = 10.0 ** (math.floor(math.log10(value)) - digits + 1)
    rounded: float = math.ceil(value / scale) * scale
    if rounded <= value:
        rounded += scale
    return float(f"{rounded:.{digits}g}")


def normalize_rows(matrix: np.ndarray) -> tuple[np.ndarray, int]:
    """Scale every nonzero row to unit Euclidean norm.

    Parameters
    ----------
    matrix : np.ndarray
        N×d floating point matrix.

    Returns
    -------
    normalized : np.ndarray
        Matrix of the same dtype; zero rows are passed through unchanged.
    zero_rows : int
        Number of rows that were left unnormalized.
    """
    norms: np.ndarray = np.linalg.norm(matrix, axis=1, keepdims=True)
    zero: np.ndarray = norms[:, 0] == 0
    safe: np.ndarray = np.where(zero[:, None], 1.0, norms)
    return (matrix / safe).astype(matrix.dtype, copy=False), int(zero.sum())


def check_dim(actual: int, expected: int, *, what: str) -> None:
    """Raise if two embedding dimensions disagree.

    Parameters
    ----------
    actual : int
        Dimension of the offered operand.
    expected : int
        Dimension required.
    what : str
        Name of the operand, used in the error message.

    Raises
    ------
    DimensionMismatchError
        If ``actual != expected``.
    """
    if actual != expected:
        error_message: str = f"Dimension mismatch for {what}: got {actual}, expected {expected}."
        raise DimensionMismatchError(error_message)


def row_blocks(count: int, block: int) -> Iterable[slice]:
    """Yield consecutive row slices of at most ``block`` rows.

    Parameters
    ----------
    count : int
        Total number of rows.
    block : int
        Maximum rows per slice.

    Yields
    ------
    slice
        The next slice.
    """
    for start in range(0, count, block):
        yield slice(start, min(start + block, count))


def log_parameters(logger: logging.Logger, parameters: Mapping[str, object], *, title: str = "parameters") -> None:
    """Log run parameters in a table format.

    Parameters
    ----------
    logger : logging.Logger
        Destination logger.
    parameters : Mapping[str, object]
        Parameter names and values.
    title : str, optional
        Heading printed above the table.
    """
    table: str = tabulate(
        tabular_data=[(key, value) for key, value in parameters.items()],
        headers=["Parameter", "Value"],
        tablefmt="grid",
    )
    logger.info("Running with %s:\n%s", title, table)
