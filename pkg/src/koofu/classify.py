"""Library for prototype banks, neighbor indexes and the three classifiers.

* Nearest visual prototype (NVP): rank class-mean embeddings by similarity.
* k nearest neighbors: plurality vote over the k closest training samples.
* Textual prototypes: NVP against aggregated text embeddings of class names.

Search is exact. Queries and index rows are processed in blocks of
``query_block`` × ``index_block`` scores with a running top-k per query, so
memory stays bounded on multi-million-row indexes. Scores are computed in
float64. Ties are broken by ascending class id (prototypes) or sample index
(neighbors), never by row order.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Literal

import numpy as np
import scipy.sparse

from koofu.dataio import read_labels, read_vectors, write_labels, write_vectors
from koofu.errors import DimensionMismatchError, EmptyClassError, FormatError, LabelRangeError, ValidationError
from koofu.transform import KooFuTransform, LdaTransform, apply
from koofu.utils import check_dim, normalize_rows, resolve_threads, row_blocks

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

    from koofu.dataio import EmbeddingDataset

logger = logging.getLogger(__name__)

DEFAULT_QUERY_BLOCK: int = 8192
DEFAULT_INDEX_BLOCK: int = 16384
UNIT_NORM_TOLERANCE: float = 1e-6
DEGENERATE_RATIO: float = 1e-9

Metric = Literal["cosine", "euclidean"]
Modality = Literal["visual", "textual"]
PrototypeMode = Literal["mean-then-normalize", "normalize-then-mean"]

METRICS: tuple[str, ...] = ("cosine", "euclidean")
MODALITIES: tuple[str, ...] = ("visual", "textual")
PROTOTYPE_MODES: tuple[str, ...] = ("mean-then-normalize", "normalize-then-mean")


def _check_choice(value: str, choices: tuple[str, ...], *, what: str) -> None:
    if value not in choices:
        error_message: str = f"Unknown {what} {value!r}.\nHint: use one of {', '.join(choices)}."
        raise ValidationError(error_message)


def _check_unit_rows(vectors: np.ndarray, *, what: str) -> None:
    for rows in row_blocks(vectors.shape[0], DEFAULT_INDEX_BLOCK):
        norms: np.ndarray = np.linalg.norm(np.asarray(vectors[rows], dtype=np.float64), axis=1)
        bad: np.ndarray = np.flatnonzero(np.abs(norms - 1.0) > UNIT_NORM_TOLERANCE)
        if bad.size:
            error_message: str = (
                f"Cosine {what} row {rows.start + int(bad[0])} has norm {norms[bad[0]]:.9g}.\n"
                "Hint: normalize rows to unit length or use the euclidean metric."
            )
            raise ValidationError(error_message)


@dataclass(frozen=True)
class PrototypeBank:
    """One prototype per class.

    Rows are kept sorted by class id.

    Attributes
    ----------
    prototypes : np.ndarray
        K×d matrix.
    labels : np.ndarray
        K unique class ids.
    metric : {"cosine", "euclidean"}
        Similarity used for ranking; cosine banks hold unit-norm rows.
    modality : {"visual", "textual"}
        Source of the prototypes.
    transform_id : str or None
        Fingerprint of the transform the prototypes live behind, if any.
    """

    prototypes: np.ndarray
    labels: np.ndarray
    metric: Metric = "cosine"
    modality: Modality = "visual"
    transform_id: str | None = None

    def __post_init__(self) -> None:
        """Validate and sort by class id."""
        _check_choice(self.metric, METRICS, what="metric")
        _check_choice(self.modality, MODALITIES, what="modality")
        labels: np.ndarray = np.asarray(self.labels, dtype=np.int64)
        if self.prototypes.ndim != 2 or labels.shape != (self.prototypes.shape[0],):
            error_message: str = f"Got {labels.shape} labels for prototypes of shape {self.prototypes.shape}."
            raise ValidationError(error_message)
        if np.unique(labels).size != labels.size:
            error_message = "Prototype labels must be unique."
            raise ValidationError(error_message)
        if self.metric == "cosine":
            _check_unit_rows(self.prototypes, what="prototype")
        order: np.ndarray = np.argsort(labels, kind="stable")
        object.__setattr__(self, "labels", labels[order])
        object.__setattr__(self, "prototypes", np.ascontiguousarray(self.prototypes[order]))

    @property
    def dim(self) -> int:
        """Prototype dimension d."""
        return int(self.prototypes.shape[1])

    @property
    def num_classes(self) -> int:
        """Number of prototypes K."""
        return int(self.prototypes.shape[0])


@dataclass(frozen=True)
class NeighborIndex:
    """Training embeddings searched by k-NN.

    Rows are kept sorted by sample index.

    Attributes
    ----------
    vectors : np.ndarray
        N×d matrix.
    labels : np.ndarray
        N class ids.
    metric : {"cosine", "euclidean"}
        Similarity used for search; cosine indexes hold unit-norm rows.
    ids : np.ndarray
        N unique sample indices, defaulting to ``0..N-1``.
    """

    vectors: np.ndarray
    labels: np.ndarray
    metric: Metric = "cosine"
    ids: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        """Validate and sort by sample index."""
        _check_choice(self.metric, METRICS, what="metric")
        labels: np.ndarray = np.asarray(self.labels, dtype=np.int64)
        if self.vectors.ndim != 2 or labels.shape != (self.vectors.shape[0],):
            error_message: str = f"Got {labels.shape} labels for an index of shape {self.vectors.shape}."
            raise ValidationError(error_message)
        ids: np.ndarray = (
            np.arange(labels.size, dtype=np.int64) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        )
        if ids.shape != labels.shape:
            error_message = f"Got {ids.shape} sample ids for {labels.size} rows."
            raise ValidationError(error_message)
        if ids.size > 1 and not np.all(np.diff(ids) > 0):
            order: np.ndarray = np.argsort(ids, kind="stable")
            ids, labels = ids[order], labels[order]
            if np.any(np.diff(ids) == 0):
                error_message = "Sample ids must be unique."
                raise ValidationError(error_message)
            object.__setattr__(self, "vectors", np.ascontiguousarray(self.vectors[order]))
        if self.metric == "cosine":
            _check_unit_rows(self.vectors, what="index")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "ids", ids)

    @property
    def dim(self) -> int:
        """Index dimension d."""
        return int(self.vectors.shape[1])

    @property
    def count(self) -> int:
        """Number of indexed samples N."""
        return int(self.vectors.shape[0])

    @property
    def nbytes(self) -> int:
        """Index size as stored in float32, ``N·d·4`` bytes."""
        return self.count * self.dim * 4


@dataclass(frozen=True)
class KnnResult:
    """Output of :func:`knn_classify`.

    Attributes
    ----------
    labels : np.ndarray
        Voted class id per query, shape (n,).
    neighbors : np.ndarray
        Sample indices of the k nearest rows, nearest first, shape (n, k).
    scores : np.ndarray
        Cosine similarity or Euclidean distance of each neighbor, shape (n, k).
    """

    labels: np.ndarray
    neighbors: np.ndarray
    scores: np.ndarray


#
# Construction
#


def _class_sums(vectors: np.ndarray, labels: np.ndarray, num_classes: int) -> np.ndarray:
    one_hot = scipy.sparse.csr_matrix(
        (np.ones(labels.size), (labels, np.arange(labels.size))),
        shape=(num_classes, labels.size),
    )
    return np.asarray(one_hot @ vectors)


def _finish_prototypes(
    means: np.ndarray,
    labels: np.ndarray,
    scale: np.ndarray,
    metric: Metric,
) -> tuple[np.ndarray, np.ndarray]:
    """Normalize cosine prototypes and drop those whose mean vanished."""
    if metric == "euclidean":
        return means, labels
    norms: np.ndarray = np.linalg.norm(means, axis=1)
    degenerate: np.ndarray = norms <= DEGENERATE_RATIO * scale
    if degenerate.any():
        logger.warning(
            "Excluding %d degenerate zero-mean prototypes (classes %s)",
            int(degenerate.sum()),
            labels[degenerate][:10].tolist(),
        )
    keep: np.ndarray = ~degenerate
    return means[keep] / norms[keep, None], labels[keep]


def build_prototypes(
    dataset: EmbeddingDataset,
    transform: KooFuTransform | LdaTransform | None = None,
    metric: Metric = "cosine",
    *,
    mode: PrototypeMode = "mean-then-normalize",
    classes: Sequence[int] | None = None,
) -> PrototypeBank:
    """Build one visual prototype per class.

    Parameters
    ----------
    dataset : EmbeddingDataset
        Labeled training embeddings.
    transform : KooFuTransform or LdaTransform, optional
        Applied to the embeddings before averaging.
    metric : {"cosine", "euclidean"}, optional
        Cosine prototypes are unit-normalized (default is cosine).
    mode : {"mean-then-normalize", "normalize-then-mean"}, optional
        Whether samples are normalized before averaging, cosine only.
    classes : Sequence[int], optional
        Classes to include; each must have samples. Defaults to every class
        present in the dataset.

    Returns
    -------
    PrototypeBank
        The bank. Classes whose mean is zero are excluded with a warning in
        cosine mode.

    Raises
    ------
    EmptyClassError
        If an explicitly requested class has no samples.
    DimensionMismatchError
        If the transform dimension differs from the dataset.
    """
    _check_choice(metric, METRICS, what="metric")
    _check_choice(mode, PROTOTYPE_MODES, what="prototype mode")
    vectors: np.ndarray = dataset.vectors
    if transform is not None:
        vectors = apply(transform, vectors)
    samples: np.ndarray = np.asarray(vectors, dtype=np.float64)
    if metric == "cosine" and mode == "normalize-then-mean":
        samples, _ = normalize_rows(samples)

    labels: np.ndarray = dataset.labels.astype(np.int64)
    num_classes: int = max(dataset.num_classes, int(labels.max()) + 1 if labels.size else 0)
    counts: np.ndarray = np.bincount(labels, minlength=num_classes)
    if classes is None:
        selected: np.ndarray = np.flatnonzero(counts)
    else:
        selected = np.asarray(list(classes), dtype=np.int64)
        if selected.size and (selected.min() < 0 or selected.max() >= num_classes):
            error_message: str = f"Requested classes outside 0..{num_classes - 1}."
            raise LabelRangeError(error_message)
        empty: np.ndarray = selected[counts[selected] == 0]
        if empty.size:
            error_message = f"Requested classes {empty[:10].tolist()} have no samples."
            raise EmptyClassError(error_message)

    means: np.ndarray = _class_sums(samples, labels, num_classes)[selected] / counts[selected, None]
    scale: np.ndarray = _class_sums(np.linalg.norm(samples, axis=1)[:, None], labels, num_classes)[selected, 0]
    prototypes, kept = _finish_prototypes(means, selected, scale / counts[selected], metric)
    logger.info("Built %d %s prototypes of dimension %d", kept.size, metric, samples.shape[1])
    return PrototypeBank(
        prototypes=prototypes,
        labels=kept,
        metric=metric,
        modality="visual",
        transform_id=None if transform is None else transform.fingerprint(),
    )


def group_by_label(vectors: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Split labeled rows into one matrix per class.

    Parameters
    ----------
    vectors : np.ndarray
        M×d text embeddings.
    labels : np.ndarray
        Class each row prompts.

    Returns
    -------
    class_ids : np.ndarray
        Ascending class ids present in ``labels``.
    groups : list[np.ndarray]
        Rows of each class, in the order of ``class_ids``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    check_dim(labels.shape[0], vectors.shape[0], what="text labels")
    order: np.ndarray = np.argsort(labels, kind="stable")
    class_ids, starts = np.unique(labels[order], return_index=True)
    return class_ids, np.split(np.asarray(vectors)[order], starts[1:])


def aggregate_text_prototypes(
    embeddings_per_class: Sequence[np.ndarray],
    labels: Sequence[int] | np.ndarray | None = None,
) -> PrototypeBank:
    """Average prompt embeddings into one textual prototype per class.

    Each prototype is ``normalize(mean(normalize(v_i)))``.

    Parameters
    ----------
    embeddings_per_class : Sequence[np.ndarray]
        One M×d matrix per class, M >= 1.
    labels : array_like, optional
        Class id of each entry (default is ``0..K-1``).

    Returns
    -------
    PrototypeBank
        Cosine bank with modality ``textual``.
    """
    if not embeddings_per_class:
        error_message: str = "No text embeddings given."
        raise EmptyClassError(error_message)
    class_ids: np.ndarray = (
        np.arange(len(embeddings_per_class)) if labels is None else np.asarray(labels, dtype=np.int64)
    )
    check_dim(class_ids.size, len(embeddings_per_class), what="text prototype labels")
    dim: int = np.atleast_2d(embeddings_per_class[0]).shape[1]
    means: np.ndarray = np.empty((class_ids.size, dim))
    for row, embeddings in enumerate(embeddings_per_class):
        matrix: np.ndarray = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
        if matrix.shape[0] == 0:
            error_message = f"Class {int(class_ids[row])} has no text embeddings."
            raise EmptyClassError(error_message)
        check_dim(matrix.shape[1], dim, what=f"text embeddings of class {int(class_ids[row])}")
        means[row] = normalize_rows(matrix)[0].mean(axis=0)
    prototypes, kept = _finish_prototypes(means, class_ids, np.ones(class_ids.size), "cosine")
    return PrototypeBank(prototypes=prototypes, labels=kept, metric="cosine", modality="textual")


def transform_bank(bank: PrototypeBank, transform: KooFuTransform | LdaTransform) -> PrototypeBank:
    """Map an untransformed bank through ``transform``.

    The prototypes take the same :func:`koofu.transform.apply` path as the
    embeddings, centering included, and are renormalized in cosine mode.

    Parameters
    ----------
    bank : PrototypeBank
        Bank in the original embedding space.
    transform : KooFuTransform or LdaTransform
        Fitted transform.

    Returns
    -------
    PrototypeBank
        Bank in the transformed space.
    """
    if bank.transform_id is not None:
        error_message: str = f"Bank is already transformed ({bank.transform_id})."
        raise ValidationError(error_message)
    mapped: np.ndarray = apply(transform, bank.prototypes).astype(np.float64)
    prototypes, kept = mapped, bank.labels
    if bank.metric == "cosine":
        prototypes, kept = _finish_prototypes(mapped, bank.labels, np.ones(bank.num_classes), "cosine")
    return PrototypeBank(
        prototypes=prototypes,
        labels=kept,
        metric=bank.metric,
        modality=bank.modality,
        transform_id=transform.fingerprint(),
    )


def extend_bank(bank: PrototypeBank, other: PrototypeBank) -> PrototypeBank:
    """Add the prototypes of new classes to a bank.

    Parameters
    ----------
    bank : PrototypeBank
        Existing bank.
    other : PrototypeBank
        Prototypes of classes absent from ``bank``, in the same space.

    Returns
    -------
    PrototypeBank
        The union of both banks.
    """
    check_dim(other.dim, bank.dim, what="extension bank")
    if other.metric != bank.metric or other.transform_id != bank.transform_id:
        error_message: str = (
            f"Cannot extend a {bank.metric} bank behind {bank.transform_id} with a {other.metric} bank "
            f"behind {other.transform_id}."
        )
        raise ValidationError(error_message)
    overlap: np.ndarray = np.intersect1d(bank.labels, other.labels)
    if overlap.size:
        error_message = f"Classes {overlap[:10].tolist()} are already in the bank."
        raise ValidationError(error_message)
    return PrototypeBank(
        prototypes=np.concatenate([bank.prototypes, other.prototypes.astype(bank.prototypes.dtype)]),
        labels=np.concatenate([bank.labels, other.labels]),
        metric=bank.metric,
        modality=bank.modality if bank.modality == other.modality else "visual",
        transform_id=bank.transform_id,
    )


def restrict_bank(bank: PrototypeBank, class_ids: Iterable[int]) -> PrototypeBank:
    """Keep only the prototypes of ``class_ids``.

    Raises
    ------
    LabelRangeError
        If a requested class has no prototype.
    """
    wanted: np.ndarray = np.asarray(list(class_ids), dtype=np.int64)
    missing: np.ndarray = np.setdiff1d(wanted, bank.labels)
    if missing.size:
        error_message: str = f"Classes {missing[:10].tolist()} have no prototype ({missing.size} missing)."
        raise LabelRangeError(error_message)
    keep: np.ndarray = np.isin(bank.labels, wanted)
    return PrototypeBank(
        prototypes=bank.prototypes[keep],
        labels=bank.labels[keep],
        metric=bank.metric,
        modality=bank.modality,
        transform_id=bank.transform_id,
    )


def build_index(
    dataset: EmbeddingDataset,
    transform: KooFuTransform | LdaTransform | None = None,
    metric: Metric = "cosine",
) -> NeighborIndex:
    """Build a k-NN index from training embeddings.

    Parameters
    ----------
    dataset : EmbeddingDataset
        Labeled training embeddings.
    transform : KooFuTransform or LdaTransform, optional
        Applied to every row first.
    metric : {"cosine", "euclidean"}, optional
        Cosine rows are unit-normalized (default is cosine).

    Returns
    -------
    NeighborIndex
        The index.
    """
    _check_choice(metric, METRICS, what="metric")
    vectors: np.ndarray = dataset.vectors
    if transform is not None:
        vectors = apply(transform, vectors, renormalize=metric == "cosine")
    elif metric == "cosine":
        vectors, zero_rows = normalize_rows(np.asarray(vectors))
        if zero_rows:
            logger.warning("%d index rows are zero and cannot be normalized", zero_rows)
    return NeighborIndex(vectors=vectors, labels=dataset.labels, metric=metric)


def restrict_index(index: NeighborIndex, class_ids: Iterable[int]) -> NeighborIndex:
    """Keep only the rows of ``class_ids``, preserving sample indices.

    Raises
    ------
    LabelRangeError
        If a requested class has no rows.
    """
    wanted: np.ndarray = np.asarray(list(class_ids), dtype=np.int64)
    missing: np.ndarray = np.setdiff1d(wanted, index.labels)
    if missing.size:
        error_message: str = f"Classes {missing[:10].tolist()} have no indexed samples ({missing.size} missing)."
        raise LabelRangeError(error_message)
    keep: np.ndarray = np.isin(index.labels, wanted)
    return NeighborIndex(vectors=index.vectors[keep], labels=index.labels[keep], metric=index.metric, ids=index.ids[keep])


#
# Search
#


def _select_top(keys: np.ndarray, positions: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Keep the k smallest keys per row, ordered by (key, position)."""
    if keys.shape[1] > k:
        picked: np.ndarray = np.argpartition(keys, k - 1, axis=1)[:, :k]
        picked_keys: np.ndarray = np.take_along_axis(keys, picked, axis=1)
        kth: np.ndarray = picked_keys.max(axis=1, keepdims=True)
        ambiguous: np.ndarray = np.flatnonzero((keys == kth).sum(axis=1) > (picked_keys == kth).sum(axis=1))
        if ambiguous.size:
            picked[ambiguous] = np.lexsort((positions[ambiguous], keys[ambiguous]), axis=1)[:, :k]
        keys = np.take_along_axis(keys, picked, axis=1)
        positions = np.take_along_axis(positions, picked, axis=1)
    order: np.ndarray = np.lexsort((positions, keys), axis=1)
    return np.take_along_axis(keys, order, axis=1), np.take_along_axis(positions, order, axis=1)


def _search(
    queries: np.ndarray,
    vectors: np.ndarray,
    metric: Metric,
    k: int,
    *,
    query_block: int,
    index_block: int,
    threads: int | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact top-k search returning ranking keys and row positions.

    Keys are ``-q·x`` for cosine and ``‖x‖² - 2 q·x`` for Euclidean, so smaller
    is better in both modes.
    """
    queries64: np.ndarray = np.asarray(queries, dtype=np.float64)
    count: int = vectors.shape[0]

    def search_block(rows: slice) -> tuple[np.ndarray, np.ndarray]:
        block: np.ndarray = queries64[rows]
        best_keys: np.ndarray = np.empty((block.shape[0], 0))
        best_positions: np.ndarray = np.empty((block.shape[0], 0), dtype=np.int64)
        for cols in row_blocks(count, index_block):
            candidates: np.ndarray = np.asarray(vectors[cols], dtype=np.float64)
            keys: np.ndarray = -2.0 * (block @ candidates.T) if metric == "euclidean" else -(block @ candidates.T)
            if metric == "euclidean":
                keys += np.einsum("ij,ij->i", candidates, candidates)
            positions: np.ndarray = np.broadcast_to(np.arange(cols.start, cols.stop), keys.shape)
            best_keys, best_positions = _select_top(
                np.concatenate([best_keys, keys], axis=1),
                np.concatenate([best_positions, positions], axis=1),
                k,
            )
        return best_keys, best_positions

    blocks: list[slice] = list(row_blocks(queries64.shape[0], query_block))
    if not blocks:
        return np.empty((0, k)), np.empty((0, k), dtype=np.int64)
    workers: int = min(resolve_threads(threads), len(blocks))
    with ThreadPoolExecutor(max_workers=workers) as executor:
        results: list[tuple[np.ndarray, np.ndarray]] = list(executor.map(search_block, blocks))
    return np.concatenate([keys for keys, _ in results]), np.concatenate([pos for _, pos in results])


def _scores_from_keys(keys: np.ndarray, queries: np.ndarray, metric: Metric) -> np.ndarray:
    if metric == "cosine":
        return -keys
    sq_norms: np.ndarray = np.einsum("ij,ij->i", queries, queries)
    return np.sqrt(np.maximum(keys + sq_norms[:, None], 0.0))


def _check_queries(queries: np.ndarray, dim: int) -> np.ndarray:
    queries = np.atleast_2d(np.asarray(queries))
    check_dim(queries.shape[1], dim, what="queries")
    return queries


def nvp_classify(
    queries: np.ndarray,
    bank: PrototypeBank,
    top_k: int = 1,
    *,
    query_block: int = DEFAULT_QUERY_BLOCK,
    index_block: int = DEFAULT_INDEX_BLOCK,
    threads: int | None = None,
) -> np.ndarray:
    """Rank classes by their prototype's proximity to each query.

    Parameters
    ----------
    queries : np.ndarray
        n×d query embeddings, in the bank's space.
    bank : PrototypeBank
        Prototypes to rank.
    top_k : int, optional
        Ranked classes returned per query (default is 1).
    query_block, index_block : int, optional
        Block sizes of the exact search.
    threads : int, optional
        Worker count over query blocks.

    Returns
    -------
    np.ndarray
        n×top_k class ids, best first; ties go to the lower class id.

    Examples
    --------
    >>> bank = PrototypeBank(prototypes=np.eye(2), labels=np.array([7, 3]))
    >>> nvp_classify(np.array([[0.9, 0.1]]), bank, top_k=2)
    array([[7, 3]])
    """
    queries = _check_queries(queries, bank.dim)
    if not 1 <= top_k <= bank.num_classes:
        error_message: str = f"top_k={top_k} is out of range for a bank of {bank.num_classes} classes."
        raise ValidationError(error_message)
    _, positions = _search(
        queries,
        bank.prototypes,
        bank.metric,
        top_k,
        query_block=query_block,
        index_block=index_block,
        threads=threads,
    )
    return bank.labels[positions]


def _vote(labels: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Plurality vote; ties go to the smaller summed weight, then the lower class id."""
    same: np.ndarray = labels[:, :, None] == labels[:, None, :]
    counts: np.ndarray = same.sum(axis=2)
    summed: np.ndarray = np.where(same, weights[:, None, :], 0.0).sum(axis=2)
    winner: np.ndarray = np.lexsort((labels, summed, -counts), axis=1)[:, 0]
    return np.take_along_axis(labels, winner[:, None], axis=1)[:, 0]


def knn_classify(
    queries: np.ndarray,
    index: NeighborIndex,
    k: int,
    *,
    query_block: int = DEFAULT_QUERY_BLOCK,
    index_block: int = DEFAULT_INDEX_BLOCK,
    threads: int | None = None,
) -> KnnResult:
    """Classify queries by a plurality vote of their k nearest indexed samples.

    Neighbor ties go to the lower sample index. Vote ties go to the label with
    the smallest summed distance (largest summed similarity), then the lower
    class id.

    Parameters
    ----------
    queries : np.ndarray
        n×d query embeddings, in the index's space.
    index : NeighborIndex
        Searched samples.
    k : int
        Number of neighbors, at most the index size.
    query_block, index_block : int, optional
        Block sizes of the exact search.
    threads : int, optional
        Worker count over query blocks.

    Returns
    -------
    KnnResult
        Voted labels plus the neighbor lists.
    """
    queries = _check_queries(queries, index.dim)
    if not 1 <= k <= index.count:
        error_message: str = f"k={k} is out of range for an index of {index.count} samples."
        raise ValidationError(error_message)
    keys, positions = _search(
        queries,
        index.vectors,
        index.metric,
        k,
        query_block=query_block,
        index_block=index_block,
        threads=threads,
    )
    scores: np.ndarray = _scores_from_keys(keys, np.asarray(queries, dtype=np.float64), index.metric)
    neighbor_labels: np.ndarray = index.labels[positions]
    weights: np.ndarray = -scores if index.metric == "cosine" else scores
    return KnnResult(labels=_vote(neighbor_labels, weights), neighbors=index.ids[positions], scores=scores)


#
# Bank files
#


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def _labels_path(path: Path) -> Path:
    return path.with_suffix(".kflb")


def save_bank(bank: PrototypeBank, path: str | Path) -> None:
    """Write a bank as a KFEB file with a KFLB label file and a JSON sidecar.

    The label file and the sidecar share the stem of ``path`` with suffixes
    ``.kflb`` and ``.json``.

    Parameters
    ----------
    bank : PrototypeBank
        Bank to write.
    path : str or Path
        Destination of the prototype vectors.
    """
    path = Path(path)
    write_vectors(bank.prototypes, path)
    write_labels(bank.labels, _labels_path(path))
    sidecar: dict[str, object] = {
        "metric": bank.metric,
        "modality": bank.modality,
        "transform_id": bank.transform_id,
        "dim": bank.dim,
    }
    _sidecar_path(path).write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")


def load_bank(path: str | Path) -> PrototypeBank:
    """Read a bank written by :func:`save_bank`.

    Parameters
    ----------
    path : str or Path
        Prototype vectors file.

    Returns
    -------
    PrototypeBank
        The bank.
    """
    path = Path(path)
    try:
        sidecar: dict = json.loads(_sidecar_path(path).read_text(encoding="utf-8"))
        metric: str = sidecar["metric"]
        modality: str = sidecar["modality"]
        dim: int = int(sidecar["dim"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        error_message: str = f"Malformed bank sidecar {_sidecar_path(path)} ({e})."
        raise FormatError(error_message) from e
    prototypes: np.ndarray = read_vectors(path)
    if prototypes.shape[1] != dim:
        error_message = f"Bank {path} has dimension {prototypes.shape[1]} but its sidecar says {dim}."
        raise DimensionMismatchError(error_message)
    return PrototypeBank(
        prototypes=prototypes,
        labels=read_labels(_labels_path(path)),
        metric=metric,  # type: ignore[arg-type]
        modality=modality,  # type: ignore[arg-type]
        transform_id=sidecar.get("transform_id"),
    )
