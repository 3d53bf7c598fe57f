"""Library for single-pass, mergeable scatter statistics.

A :class:`ScatterStats` holds the class counts ``N_k``, the per-class sums
``s_k = Σ x_i`` and the second moment ``M = Σ x_i x_iᵀ``, all in float64.
From them:

* ``μ_k = s_k / N_k`` and ``μ = Σ s_k / N``
* ``S_w = M - Σ_k s_k s_kᵀ / N_k``
* ``S_b = Σ_k N_k (μ_k - μ)(μ_k - μ)ᵀ``

Statistics from disjoint shards merge by plain addition, so a large dataset can
be reduced in parallel.
"""

from __future__ import annotations

import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import reduce
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import scipy.sparse

from koofu.dataio import F64_LE, FORMAT_VERSION, check_finite, check_magic, check_size, read_header
from koofu.errors import DimensionMismatchError, EmptyClassError, LabelRangeError, ShapeError, ValidationError
from koofu.utils import check_dim, resolve_threads, row_blocks

if TYPE_CHECKING:
    from collections.abc import Sequence

    from koofu.dataio import EmbeddingDataset

logger = logging.getLogger(__name__)

DEFAULT_ACCUMULATE_BLOCK: int = 65536

STATS_MAGIC: bytes = b"KFST"
STATS_HEADER: struct.Struct = struct.Struct("<4sHII")
U64_LE: np.dtype = np.dtype("<u8")


@dataclass(frozen=True)
class ScatterStats:
    """Sufficient statistics of a labeled embedding set.

    Attributes
    ----------
    counts : np.ndarray
        Samples per class, int64, shape (K,).
    class_sums : np.ndarray
        Per-class sums, float64, shape (K, D).
    second_moment : np.ndarray
        ``Σ x xᵀ``, exactly symmetric float64, shape (D, D).
    """

    counts: np.ndarray
    class_sums: np.ndarray
    second_moment: np.ndarray

    def __post_init__(self) -> None:
        """Check shapes."""
        num_classes, dim = self.class_sums.shape
        if self.counts.shape != (num_classes,) or self.second_moment.shape != (dim, dim):
            error_message: str = (
                f"Inconsistent stats shapes: counts {self.counts.shape}, class_sums {self.class_sums.shape}, "
                f"second_moment {self.second_moment.shape}."
            )
            raise ShapeError(error_message)

    @property
    def dim(self) -> int:
        """Embedding dimension D."""
        return int(self.class_sums.shape[1])

    @property
    def num_classes(self) -> int:
        """Number of classes K."""
        return int(self.class_sums.shape[0])

    @property
    def total(self) -> int:
        """Total sample count N."""
        return int(self.counts.sum())

    @classmethod
    def empty(cls, dim: int, num_classes: int) -> ScatterStats:
        """Return zero statistics for ``dim`` dimensions and ``num_classes`` classes."""
        if dim <= 0 or num_classes < 0:
            error_message: str = f"Invalid stats shape D={dim}, K={num_classes}."
            raise ShapeError(error_message)
        return cls(
            counts=np.zeros(num_classes, dtype=np.int64),
            class_sums=np.zeros((num_classes, dim), dtype=np.float64),
            second_moment=np.zeros((dim, dim), dtype=np.float64),
        )

    def class_means(self, classes: np.ndarray | Sequence[int] | None = None) -> np.ndarray:
        """Return the per-class means μ_k.

        Parameters
        ----------
        classes : array_like, optional
            Class ids to return, in order. Defaults to all classes, which then
            must all be non-empty.

        Returns
        -------
        np.ndarray
            Means, shape (len(classes), D).

        Raises
        ------
        EmptyClassError
            If a requested class has no samples.
        """
        selected: np.ndarray = np.arange(self.num_classes) if classes is None else np.asarray(classes, dtype=np.int64)
        empty: np.ndarray = selected[self.counts[selected] == 0]
        if empty.size:
            error_message: str = f"Classes {empty[:10].tolist()} have no samples.\nHint: request non-empty classes."
            raise EmptyClassError(error_message)
        return self.class_sums[selected] / self.counts[selected, None]

    def global_mean(self) -> np.ndarray:
        """Return the global mean μ."""
        self._require_samples()
        return self.class_sums.sum(axis=0) / self.total

    def within_scatter(self) -> np.ndarray:
        """Return ``S_w = M - Σ_k s_k s_kᵀ / N_k`` over non-empty classes."""
        present: np.ndarray = self.counts > 0
        sums: np.ndarray = self.class_sums[present]
        scaled: np.ndarray = sums / self.counts[present, None]
        return _mirror_upper(self.second_moment - sums.T @ scaled)

    def between_scatter(self, weighting: str = "count") -> np.ndarray:
        """Return the between-class scatter.

        Parameters
        ----------
        weighting : {"count", "uniform"}, optional
            ``count`` gives ``Σ N_k (μ_k - μ)(μ_k - μ)ᵀ``. ``uniform`` weights
            every non-empty class by ``N / K'`` around the unweighted mean of
            class means, K' being the number of non-empty classes.

        Returns
        -------
        np.ndarray
            Symmetric positive semi-definite D×D matrix.
        """
        self._require_samples()
        present: np.ndarray = np.flatnonzero(self.counts > 0)
        means: np.ndarray = self.class_means(present)
        if weighting == "count":
            weights: np.ndarray = self.counts[present].astype(np.float64)
            center: np.ndarray = self.global_mean()
        elif weighting == "uniform":
            weights = np.full(present.size, self.total / present.size)
            center = means.mean(axis=0)
        else:
            error_message: str = f"Unknown weighting {weighting!r}.\nHint: use 'count' or 'uniform'."
            raise ValidationError(error_message)
        deviations: np.ndarray = means - center
        return _mirror_upper((deviations * weights[:, None]).T @ deviations)

    def total_scatter(self) -> np.ndarray:
        """Return ``M - N μ μᵀ``."""
        mean: np.ndarray = self.global_mean()
        return _mirror_upper(self.second_moment - self.total * np.outer(mean, mean))

    def _require_samples(self) -> None:
        if self.total == 0:
            error_message: str = "Statistics are empty.\nHint: accumulate at least one sample first."
            raise EmptyClassError(error_message)


def _mirror_upper(matrix: np.ndarray) -> np.ndarray:
    """Copy the upper triangle onto the lower one so the result is exactly symmetric."""
    upper: np.ndarray = np.triu(matrix)
    return upper + np.triu(upper, 1).T


def accumulate(
    stats: ScatterStats,
    batch: EmbeddingDataset,
    *,
    block: int = DEFAULT_ACCUMULATE_BLOCK,
) -> ScatterStats:
    """Add a labeled batch to the statistics.

    Parameters
    ----------
    stats : ScatterStats
        Running statistics.
    batch : EmbeddingDataset
        Samples to add; memory-mapped vectors are read ``block`` rows at a time.
    block : int, optional
        Rows per chunk (default is ``DEFAULT_ACCUMULATE_BLOCK``).

    Returns
    -------
    ScatterStats
        New statistics including the batch.

    Raises
    ------
    DimensionMismatchError
        If the batch dimension differs from the statistics.
    LabelRangeError
        If a batch label is not below K.
    """
    check_dim(batch.dim, stats.dim, what="batch")
    labels: np.ndarray = batch.labels.astype(np.int64)
    if labels.size and int(labels.max()) >= stats.num_classes:
        error_message: str = (
            f"Label {int(labels.max())} is out of range for statistics over {stats.num_classes} classes."
        )
        raise LabelRangeError(error_message)

    counts: np.ndarray = stats.counts + np.bincount(labels, minlength=stats.num_classes)
    class_sums: np.ndarray = stats.class_sums.copy()
    second_moment: np.ndarray = stats.second_moment.copy()
    for rows in row_blocks(batch.count, block):
        chunk: np.ndarray = np.asarray(batch.vectors[rows], dtype=np.float64)
        chunk_labels: np.ndarray = labels[rows]
        one_hot = scipy.sparse.csr_matrix(
            (np.ones(chunk_labels.size), (chunk_labels, np.arange(chunk_labels.size))),
            shape=(stats.num_classes, chunk_labels.size),
        )
        class_sums += one_hot @ chunk
        second_moment += chunk.T @ chunk

    logger.debug("Accumulated %d samples, total %d", batch.count, int(counts.sum()))
    return ScatterStats(counts=counts, class_sums=class_sums, second_moment=_mirror_upper(second_moment))


def merge(a: ScatterStats, b: ScatterStats) -> ScatterStats:
    """Combine statistics of two disjoint sample sets.

    Parameters
    ----------
    a, b : ScatterStats
        Statistics with the same D and K.

    Returns
    -------
    ScatterStats
        Componentwise sums.
    """
    if a.dim != b.dim or a.num_classes != b.num_classes:
        error_message: str = (
            f"Cannot merge stats of shape (D={a.dim}, K={a.num_classes}) with (D={b.dim}, K={b.num_classes})."
        )
        raise DimensionMismatchError(error_message)
    return ScatterStats(
        counts=a.counts + b.counts,
        class_sums=a.class_sums + b.class_sums,
        second_moment=a.second_moment + b.second_moment,
    )


def accumulate_shards(
    shards: Sequence[EmbeddingDataset],
    num_classes: int,
    *,
    threads: int | None = None,
) -> ScatterStats:
    """Accumulate shards concurrently and merge them in shard order.

    Parameters
    ----------
    shards : Sequence[EmbeddingDataset]
        Non-empty list of datasets with a common dimension.
    num_classes : int
        Number of classes K of the statistics.
    threads : int, optional
        Worker count, resolved with :func:`koofu.utils.resolve_threads`.

    Returns
    -------
    ScatterStats
        Statistics over all shards.
    """
    if not shards:
        error_message: str = "No shards given.\nHint: pass at least one embeddings/labels pair."
        raise ValidationError(error_message)
    dim: int = shards[0].dim
    workers: int = min(resolve_threads(threads), len(shards))
    logger.info("Accumulating %d shards with %d threads", len(shards), workers)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        partials: list[ScatterStats] = list(
            executor.map(lambda shard: accumulate(ScatterStats.empty(dim, num_classes), shard), shards),
        )
    return reduce(merge, partials)


def check_invariants(stats: ScatterStats) -> list[str]:
    """List violated invariants of scatter statistics.

    Parameters
    ----------
    stats : ScatterStats
        Statistics to check.

    Returns
    -------
    list[str]
        One message per violation; empty when the statistics are valid.
    """
    violations: list[str] = []
    if np.any(stats.counts < 0):
        violations.append("negative class counts")
    if not np.array_equal(stats.second_moment, stats.second_moment.T):
        violations.append("second moment is not exactly symmetric")
    if not (np.isfinite(stats.class_sums).all() and np.isfinite(stats.second_moment).all()):
        violations.append("non-finite accumulators")
    elif stats.total:
        within: np.ndarray = stats.within_scatter()
        tolerance: float = 1e-6 * max(float(np.trace(within)), 0.0) + 1e-9 * float(np.trace(stats.second_moment))
        min_eig: float = float(np.linalg.eigvalsh(within)[0])
        if min_eig < -tolerance:
            violations.append(f"within-class scatter has eigenvalue {min_eig:.3g} below -{tolerance:.3g}")
    return violations


def save_stats(stats: ScatterStats, path: str | Path) -> None:
    """Write a KFST checkpoint.

    Layout: magic, version u16, D u32, K u32, then counts (K u64), class sums
    (K×D f64) and second moment (D×D f64), little-endian and row-major.

    Parameters
    ----------
    stats : ScatterStats
        Statistics to write.
    path : str or Path
        Destination file.
    """
    with Path(path).open("wb") as handle:
        handle.write(STATS_HEADER.pack(STATS_MAGIC, FORMAT_VERSION, stats.dim, stats.num_classes))
        handle.write(np.ascontiguousarray(stats.counts, dtype=U64_LE).tobytes())
        handle.write(np.ascontiguousarray(stats.class_sums, dtype=F64_LE).tobytes())
        handle.write(np.ascontiguousarray(stats.second_moment, dtype=F64_LE).tobytes())


def load_stats(path: str | Path) -> ScatterStats:
    """Read a KFST checkpoint written by :func:`save_stats`.

    Parameters
    ----------
    path : str or Path
        File to read.

    Returns
    -------
    ScatterStats
        The stored statistics.
    """
    path = Path(path)
    with path.open("rb") as handle:
        magic, version, dim, num_classes = read_header(handle, STATS_HEADER, path)
    check_magic(magic, STATS_MAGIC, version, path)
    if dim == 0:
        error_message: str = f"Zero dimension in {path}."
        raise ShapeError(error_message)
    check_size(path, STATS_HEADER.size + 8 * (num_classes + num_classes * dim + dim * dim))

    offset: int = STATS_HEADER.size
    counts: np.ndarray = np.fromfile(path, dtype=U64_LE, count=num_classes, offset=offset)
    offset += 8 * num_classes
    sums: np.ndarray = np.fromfile(path, dtype=F64_LE, count=num_classes * dim, offset=offset)
    offset += 8 * num_classes * dim
    moment: np.ndarray = np.fromfile(path, dtype=F64_LE, count=dim * dim, offset=offset)
    check_finite(sums.reshape(num_classes, dim), what=f"{path} class sums")
    check_finite(moment.reshape(dim, dim), what=f"{path} second moment")
    return ScatterStats(
        counts=counts.astype(np.int64),
        class_sums=sums.reshape(num_classes, dim).astype(np.float64),
        second_moment=moment.reshape(dim, dim).astype(np.float64),
    )
