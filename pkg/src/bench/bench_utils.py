"""Library for utility functions used in the testbenches.

Seeded instance generators, tolerance helpers and a tabulated dump of the
state a failing check was looking at.
"""

from __future__ import annotations

import numpy as np
from tabulate import tabulate

from koofu.dataio import EmbeddingDataset
from koofu.stats import ScatterStats, accumulate

# (D, K) grid of the random statistics instances
INSTANCE_SHAPES: list[tuple[int, int]] = [(8, 3), (32, 10), (64, 50), (8, 10), (32, 3)]


def make_rng(seed: int) -> np.random.Generator:
    """Return the generator every bench derives its randomness from."""
    return np.random.default_rng(seed)


def random_spd(rng: np.random.Generator, dim: int, *, condition: float = 100.0) -> np.ndarray:
    """Draw a symmetric positive definite matrix with the given condition number.

    Parameters
    ----------
    rng : np.random.Generator
        Source of randomness.
    dim : int
        Matrix size.
    condition : float, optional
        Ratio of the largest to the smallest eigenvalue (default is 100).

    Returns
    -------
    np.ndarray
        Exactly symmetric dim×dim matrix.
    """
    basis, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    eigenvalues: np.ndarray = np.logspace(0.0, np.log10(condition), dim)
    matrix: np.ndarray = (basis * eigenvalues) @ basis.T
    return (matrix + matrix.T) / 2.0


def random_dataset(
    rng: np.random.Generator,
    *,
    num_classes: int,
    dim: int,
    per_class: int,
    spread: float = 3.0,
    dtype: type = np.float32,
) -> EmbeddingDataset:
    """Draw a labeled Gaussian dataset with shuffled rows.

    Parameters
    ----------
    rng : np.random.Generator
        Source of randomness.
    num_classes : int
        Number of classes K, all non-empty.
    dim : int
        Dimension D.
    per_class : int
        Samples per class.
    spread : float, optional
        Standard deviation of the class means (default is 3).
    dtype : type, optional
        Element type of the returned vectors (default is float32).

    Returns
    -------
    EmbeddingDataset
        ``num_classes · per_class`` samples.
    """
    means: np.ndarray = rng.normal(scale=spread, size=(num_classes, dim))
    labels: np.ndarray = rng.permutation(np.repeat(np.arange(num_classes), per_class))
    vectors: np.ndarray = means[labels] + rng.standard_normal((labels.size, dim))
    dataset: EmbeddingDataset = EmbeddingDataset.from_arrays(vectors, labels, num_classes=num_classes)
    if dtype is np.float32:
        return dataset
    return EmbeddingDataset(
        vectors=vectors.astype(dtype),
        labels=dataset.labels,
        class_table=dataset.class_table,
    )


def random_stats(rng: np.random.Generator, dim: int, num_classes: int, *, per_class: int = 20) -> ScatterStats:
    """Accumulate the statistics of :func:`random_dataset`."""
    dataset: EmbeddingDataset = random_dataset(rng, num_classes=num_classes, dim=dim, per_class=per_class)
    return accumulate(ScatterStats.empty(dim, num_classes), dataset)


def stats_with_scatter(means: np.ndarray, counts: np.ndarray, within: np.ndarray) -> ScatterStats:
    """Build statistics whose class means, counts and within-class scatter are given.

    Parameters
    ----------
    means : np.ndarray
        K×D class means.
    counts : np.ndarray
        K positive class sizes.
    within : np.ndarray
        Symmetric D×D within-class scatter.

    Returns
    -------
    ScatterStats
        Statistics with ``s_k = N_k μ_k`` and ``M = S_w + Σ N_k μ_k μ_kᵀ``.
    """
    means = np.asarray(means, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.int64)
    second_moment: np.ndarray = within + (means * counts[:, None]).T @ means
    return ScatterStats(
        counts=counts,
        class_sums=means * counts[:, None],
        second_moment=(second_moment + second_moment.T) / 2.0,
    )


def unit_rows(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    """Draw ``count`` float64 rows of unit Euclidean norm."""
    rows: np.ndarray = rng.standard_normal((count, dim))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def relative_frobenius(actual: np.ndarray, expected: np.ndarray) -> float:
    """Return ``‖actual - expected‖_F / max(‖expected‖_F, 1)``."""
    return float(np.linalg.norm(actual - expected) / max(float(np.linalg.norm(expected)), 1.0))


def format_state(state: dict[str, object]) -> str:
    """Render the values a failing check compared, one row per name.

    Parameters
    ----------
    state : dict[str, object]
        Names and values; arrays are summarized by shape and a short preview.

    Returns
    -------
    str
        A ``tabulate`` grid.
    """
    rows: list[tuple[str, str]] = []
    for name, value in state.items():
        if isinstance(value, np.ndarray):
            preview: str = np.array2string(value.ravel()[:6], precision=6)
            rows.append((name, f"{value.dtype}{list(value.shape)} {preview}"))
        else:
            rows.append((name, repr(value)))
    return tabulate(rows, headers=["Name", "Value"], tablefmt="grid")
