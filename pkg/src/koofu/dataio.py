"""Reading and writing of embedding datasets, labels, class tables and transforms.

Binary layouts (all integers and floats little-endian):

* ``KFEB`` embeddings: magic, version u16, dtype u8 (0 = f32), flags u8 (0),
  dim u32, count u64, padding to 24 bytes, then count×dim f32 row-major.
* ``KFLB`` labels: magic, version u16, count u64, then count u32 class ids.
* ``KFTX`` transforms: magic, version u16, D u32, L u32, λ f64, then μ (D f64),
  Z (D×D f64), U_L (D×L f64) and γ (L f64), all row-major.

Class tables are UTF-8 TSV files with one ``id<TAB>name`` line per class.
Multi-label ground truth is newline-delimited JSON, one
``{"index": int, "labels": [int, ...]}`` record per line. Class-set files list
one decimal class id per line.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, BinaryIO

import numpy as np

from koofu.errors import FormatError, LabelRangeError, ShapeError, ValidationError
from koofu.transform import KooFuTransform

if TYPE_CHECKING:
    from collections.abc import Iterable, Mapping

logger = logging.getLogger(__name__)

FORMAT_VERSION: int = 1

EMBEDDING_MAGIC: bytes = b"KFEB"
EMBEDDING_HEADER: struct.Struct = struct.Struct("<4sHBBIQ4x")
DTYPE_F32: int = 0

LABEL_MAGIC: bytes = b"KFLB"
LABEL_HEADER: struct.Struct = struct.Struct("<4sHQ")

TRANSFORM_MAGIC: bytes = b"KFTX"
TRANSFORM_HEADER: struct.Struct = struct.Struct("<4sHIId")

F32_LE: np.dtype = np.dtype("<f4")
F64_LE: np.dtype = np.dtype("<f8")
U32_LE: np.dtype = np.dtype("<u4")


@dataclass(frozen=True)
class EmbeddingDataset:
    """N labeled D-dimensional embeddings with their class table.

    Attributes
    ----------
    vectors : np.ndarray
        N×D float32 matrix, one sample per row.
    labels : np.ndarray
        N uint32 class ids.
    class_table : dict[int, str]
        Class id to class name, ids ``0..K-1``.
    """

    vectors: np.ndarray
    labels: np.ndarray
    class_table: dict[int, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        """Validate the dataset invariants."""
        if self.vectors.ndim != 2 or self.vectors.shape[1] == 0:
            error_message: str = f"Vectors must be an N×D matrix with D > 0, got shape {self.vectors.shape}."
            raise ShapeError(error_message)
        if self.labels.ndim != 1 or self.labels.shape[0] != self.vectors.shape[0]:
            error_message = f"Got {self.labels.shape[0]} labels for {self.vectors.shape[0]} vectors."
            raise ShapeError(error_message)
        if self.labels.size and int(self.labels.max()) >= self.num_classes:
            error_message = (
                f"Label {int(self.labels.max())} is out of range for a class table of {self.num_classes} entries."
            )
            raise LabelRangeError(error_message)

    @property
    def dim(self) -> int:
        """Embedding dimension D."""
        return int(self.vectors.shape[1])

    @property
    def count(self) -> int:
        """Number of samples N."""
        return int(self.vectors.shape[0])

    @property
    def num_classes(self) -> int:
        """Number of classes K in the class table."""
        return len(self.class_table)

    @classmethod
    def from_arrays(
        cls,
        vectors: np.ndarray,
        labels: np.ndarray | Iterable[int],
        class_table: Mapping[int, str] | None = None,
        *,
        num_classes: int | None = None,
    ) -> EmbeddingDataset:
        """Build a dataset from in-memory arrays.

        Parameters
        ----------
        vectors : np.ndarray
            N×D matrix, converted to float32.
        labels : array_like
            N class ids.
        class_table : Mapping[int, str], optional
            Class names. When omitted, names ``class_<id>`` are generated for
            ``num_classes`` classes (default: ``max(labels) + 1``).
        num_classes : int, optional
            Number of classes when no class table is given.

        Returns
        -------
        EmbeddingDataset
            The validated dataset.
        """
        vectors = np.ascontiguousarray(vectors, dtype=np.float32)
        labels = np.ascontiguousarray(np.asarray(labels, dtype=np.int64))
        if labels.size and int(labels.min()) < 0:
            error_message: str = f"Negative class id {int(labels.min())}."
            raise LabelRangeError(error_message)
        labels = labels.astype(np.uint32)
        if class_table is None:
            if num_classes is None:
                num_classes = int(labels.max()) + 1 if labels.size else 0
            class_table = {class_id: f"class_{class_id}" for class_id in range(num_classes)}
        check_finite(vectors, what="vectors")
        return cls(vectors=vectors, labels=labels, class_table=dict(class_table))


@dataclass(frozen=True)
class MultiLabelGroundTruth:
    """Sample index to the set of acceptable class ids.

    Attributes
    ----------
    entries : dict[int, frozenset[int]]
        Non-empty label sets keyed by query index.
    """

    entries: dict[int, frozenset[int]]

    def __post_init__(self) -> None:
        """Reject empty label sets."""
        for index, labels in self.entries.items():
            if not labels:
                error_message: str = f"Ground truth for sample {index} has an empty label set."
                raise ValidationError(error_message)

    def validate(self, num_classes: int) -> None:
        """Check every referenced class id exists in a class table of ``num_classes``.

        Parameters
        ----------
        num_classes : int
            Size of the evaluation class table.

        Raises
        ------
        LabelRangeError
            If a class id is out of range.
        """
        for index, labels in self.entries.items():
            bad: list[int] = sorted(label for label in labels if label < 0 or label >= num_classes)
            if bad:
                error_message: str = f"Ground truth for sample {index} references unknown classes {bad}."
                raise LabelRangeError(error_message)

    @classmethod
    def from_single_labels(cls, labels: np.ndarray) -> MultiLabelGroundTruth:
        """Wrap single-label ground truth as singleton sets.

        Parameters
        ----------
        labels : np.ndarray
            One class id per sample.

        Returns
        -------
        MultiLabelGroundTruth
            Ground truth with ``{labels[i]}`` for every sample i.
        """
        return cls(entries={index: frozenset((int(label),)) for index, label in enumerate(labels)})


def check_finite(array: np.ndarray, *, what: str) -> None:
    """Reject NaN and infinite values.

    Parameters
    ----------
    array : np.ndarray
        Array to check.
    what : str
        Name used in the error message.

    Raises
    ------
    FormatError
        If any value is not finite.
    """
    if array.size and not np.isfinite(array).all():
        bad_rows: np.ndarray = np.flatnonzero(~np.isfinite(array.reshape(array.shape[0], -1)).all(axis=1))
        error_message: str = (
            f"Non-finite values in {what} (first bad row {int(bad_rows[0])}, {bad_rows.size} rows affected).\n"
            "Hint: clean the embeddings upstream; non-finite values poison scatter accumulation."
        )
        raise FormatError(error_message)


def read_header(handle: BinaryIO, header: struct.Struct, path: Path) -> tuple:
    """Read and unpack a fixed-size header, failing on short reads."""
    raw: bytes = handle.read(header.size)
    if len(raw) < header.size:
        error_message: str = f"Truncated header in {path}: {len(raw)} of {header.size} bytes."
        raise FormatError(error_message)
    return header.unpack(raw)


def check_magic(magic: bytes, expected: bytes, version: int, path: Path) -> None:
    """Check the magic bytes and format version of a header."""
    if magic != expected:
        error_message: str = f"Bad magic {magic!r} in {path}, expected {expected!r}."
        raise FormatError(error_message)
    if version != FORMAT_VERSION:
        error_message = (
            f"Unsupported version {version} in {path}.\nHint: this reader understands version {FORMAT_VERSION}."
        )
        raise FormatError(error_message)


def check_size(path: Path, expected: int) -> None:
    """Require the file size to equal the size the header declares."""
    actual: int = path.stat().st_size
    if actual < expected:
        error_message: str = f"Truncated file {path}: {actual} bytes, header declares {expected}."
        raise FormatError(error_message)
    if actual > expected:
        error_message = f"Trailing data in {path}: {actual} bytes, header declares {expected}."
        raise FormatError(error_message)


#
# Embeddings
#


def read_vectors(path: str | Path, *, mmap: bool = False) -> np.ndarray:
    """Read a KFEB embedding file.

    Parameters
    ----------
    path : str or Path
        File to read.
    mmap : bool, optional
        If True, return a read-only memory map instead of loading the payload.

    Returns
    -------
    np.ndarray
        count×dim float32 matrix.

    Raises
    ------
    FormatError
        On bad magic, unsupported version or dtype, size mismatch or
        non-finite values.
    """
    path = Path(path)
    with path.open("rb") as handle:
        magic, version, dtype, flags, dim, count = read_header(handle, EMBEDDING_HEADER, path)
    check_magic(magic, EMBEDDING_MAGIC, version, path)
    if dtype != DTYPE_F32:
        error_message: str = f"Unsupported dtype code {dtype} in {path}.\nHint: only 0 (float32) is defined."
        raise FormatError(error_message)
    if flags != 0:
        error_message = f"Reserved flags byte is {flags} in {path}, expected 0."
        raise FormatError(error_message)
    if dim == 0:
        error_message = f"Zero embedding dimension in {path}."
        raise FormatError(error_message)
    check_size(path, EMBEDDING_HEADER.size + count * dim * F32_LE.itemsize)

    if count == 0:
        return np.zeros((0, dim), dtype=np.float32)
    if mmap:
        vectors: np.ndarray = np.memmap(path, dtype=F32_LE, mode="r", offset=EMBEDDING_HEADER.size, shape=(count, dim))
    else:
        vectors = np.fromfile(path, dtype=F32_LE, count=count * dim, offset=EMBEDDING_HEADER.size).reshape(count, dim)
    check_finite(vectors, what=str(path))
    return vectors.astype(np.float32, copy=False)


def write_vectors(vectors: np.ndarray, path: str | Path) -> None:
    """Write a KFEB embedding file.

    Parameters
    ----------
    vectors : np.ndarray
        N×D matrix, stored as float32.
    path : str or Path
        Destination file.
    """
    vectors = np.ascontiguousarray(vectors, dtype=F32_LE)
    if vectors.ndim != 2 or vectors.shape[1] == 0:
        error_message: str = f"Vectors must be an N×D matrix with D > 0, got shape {vectors.shape}."
        raise ShapeError(error_message)
    count, dim = vectors.shape
    with Path(path).open("wb") as handle:
        handle.write(EMBEDDING_HEADER.pack(EMBEDDING_MAGIC, FORMAT_VERSION, DTYPE_F32, 0, dim, count))
        handle.write(vectors.tobytes(order="C"))


def read_labels(path: str | Path) -> np.ndarray:
    """Read a KFLB label file.

    Parameters
    ----------
    path : str or Path
        File to read.

    Returns
    -------
    np.ndarray
        uint32 class ids.
    """
    path = Path(path)
    with path.open("rb") as handle:
        magic, version, count = read_header(handle, LABEL_HEADER, path)
    check_magic(magic, LABEL_MAGIC, version, path)
    check_size(path, LABEL_HEADER.size + count * U32_LE.itemsize)
    return np.fromfile(path, dtype=U32_LE, count=count, offset=LABEL_HEADER.size).astype(np.uint32)


def write_labels(labels: np.ndarray, path: str | Path) -> None:
    """Write a KFLB label file.

    Parameters
    ----------
    labels : np.ndarray
        Class ids.
    path : str or Path
        Destination file.
    """
    labels = np.ascontiguousarray(labels, dtype=U32_LE)
    with Path(path).open("wb") as handle:
        handle.write(LABEL_HEADER.pack(LABEL_MAGIC, FORMAT_VERSION, labels.shape[0]))
        handle.write(labels.tobytes(order="C"))


def read_class_table(path: str | Path) -> dict[int, str]:
    """Read a TSV class table.

    Parameters
    ----------
    path : str or Path
        UTF-8 file with one ``id<TAB>name`` line per class.

    Returns
    -------
    dict[int, str]
        Class id to name, with ids ``0..K-1``.
    """
    path = Path(path)
    table: dict[int, str] = {}
    for line_number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        class_id_str, sep, name = line.partition("\t")
        try:
            class_id: int = int(class_id_str)
        except ValueError as e:
            error_message: str = f"{path}:{line_number}: class id {class_id_str!r} is not an integer."
            raise FormatError(error_message) from e
        if not sep:
            error_message = f"{path}:{line_number}: expected 'id<TAB>name'."
            raise FormatError(error_message)
        if class_id in table:
            error_message = f"{path}:{line_number}: duplicate class id {class_id}."
            raise FormatError(error_message)
        table[class_id] = name

    if sorted(table) != list(range(len(table))):
        error_message = f"Class ids in {path} must be exactly 0..{len(table) - 1}."
        raise FormatError(error_message)
    return dict(sorted(table.items()))


def write_class_table(class_table: Mapping[int, str], path: str | Path) -> None:
    """Write a TSV class table.

    Parameters
    ----------
    class_table : Mapping[int, str]
        Class id to name.
    path : str or Path
        Destination file.
    """
    lines: list[str] = [f"{class_id}\t{name}\n" for class_id, name in sorted(class_table.items())]
    Path(path).write_text("".join(lines), encoding="utf-8")


def read_embeddings(
    path: str | Path,
    labels_path: str | Path,
    classes_path: str | Path,
    *,
    mmap: bool = False,
) -> EmbeddingDataset:
    """Read a labeled dataset from its vector, label and class-table files.

    Parameters
    ----------
    path : str or Path
        KFEB vectors.
    labels_path : str or Path
        KFLB labels.
    classes_path : str or Path
        TSV class table.
    mmap : bool, optional
        Memory-map the vectors (default is False).

    Returns
    -------
    EmbeddingDataset
        The validated dataset.
    """
    vectors: np.ndarray = read_vectors(path, mmap=mmap)
    labels: np.ndarray = read_labels(labels_path)
    class_table: dict[int, str] = read_class_table(classes_path)
    dataset = EmbeddingDataset(vectors=vectors, labels=labels, class_table=class_table)
    logger.debug("Read %s: N=%d D=%d K=%d", path, dataset.count, dataset.dim, dataset.num_classes)
    return dataset


def write_embeddings(
    dataset: EmbeddingDataset,
    path: str | Path,
    labels_path: str | Path,
    classes_path: str | Path,
) -> None:
    """Write a labeled dataset to its vector, label and class-table files.

    Parameters
    ----------
    dataset : EmbeddingDataset
        Dataset to write.
    path : str or Path
        KFEB destination.
    labels_path : str or Path
        KFLB destination.
    classes_path : str or Path
        TSV destination.
    """
    write_vectors(dataset.vectors, path)
    write_labels(dataset.labels, labels_path)
    write_class_table(dataset.class_table, classes_path)


#
# Ground truth and class sets
#


def read_ground_truth(path: str | Path) -> MultiLabelGroundTruth:
    """Read multi-label ground truth from newline-delimited JSON.

    Parameters
    ----------
    path : str or Path
        File with one ``{"index": int, "labels": [int, ...]}`` record per line.

    Returns
    -------
    MultiLabelGroundTruth
        Parsed ground truth.
    """
    path = Path(path)
    entries: dict[int, frozenset[int]] = {}
    with path.open(encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record: dict = json.loads(line)
                index: int = int(record["index"])
                labels: frozenset[int] = frozenset(int(label) for label in record["labels"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                error_message: str = f"{path}:{line_number}: malformed ground-truth record ({e})."
                raise FormatError(error_message) from e
            if index in entries:
                error_message = f"{path}:{line_number}: duplicate index {index}."
                raise FormatError(error_message)
            entries[index] = labels
    return MultiLabelGroundTruth(entries=entries)


def write_ground_truth(ground_truth: MultiLabelGroundTruth, path: str | Path) -> None:
    """Write multi-label ground truth as newline-delimited JSON.

    Parameters
    ----------
    ground_truth : MultiLabelGroundTruth
        Ground truth to write.
    path : str or Path
        Destination file.
    """
    with Path(path).open("w", encoding="utf-8") as handle:
        for index, labels in sorted(ground_truth.entries.items()):
            handle.write(json.dumps({"index": index, "labels": sorted(labels)}) + "\n")


def read_class_set(path: str | Path) -> list[int]:
    """Read a class-set file.

    Parameters
    ----------
    path : str or Path
        UTF-8 file with one decimal class id per line.

    Returns
    -------
    list[int]
        Class ids in file order, without duplicates.
    """
    path = Path(path)
    class_ids: list[int] = []
    seen: set[int] = set()
    for line_number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        text: str = line.strip()
        if not text:
            continue
        if not text.isdecimal():
            error_message: str = f"{path}:{line_number}: {text!r} is not a decimal class id."
            raise FormatError(error_message)
        class_id: int = int(text)
        if class_id not in seen:
            seen.add(class_id)
            class_ids.append(class_id)
    return class_ids


def write_class_set(class_ids: Iterable[int], path: str | Path) -> None:
    """Write a class-set file.

    Parameters
    ----------
    class_ids : Iterable[int]
        Class ids.
    path : str or Path
        Destination file.
    """
    Path(path).write_text("".join(f"{int(class_id)}\n" for class_id in class_ids), encoding="utf-8")


#
# Transforms
#


def read_transform(path: str | Path) -> KooFuTransform:
    """Read a KFTX transform file.

    Parameters
    ----------
    path : str or Path
        File to read.

    Returns
    -------
    KooFuTransform
        The transform; its projection is recomputed as ``U_Lᵀ Z``.

    Raises
    ------
    FormatError
        On bad magic, version or size.
    ShapeError
        If the header declares ``L > D``.
    ValidationError
        If the header declares ``λ <= 0``.
    """
    path = Path(path)
    with path.open("rb") as handle:
        magic, version, dim, out_dim, shrinkage = read_header(handle, TRANSFORM_HEADER, path)
    check_magic(magic, TRANSFORM_MAGIC, version, path)
    if dim == 0 or out_dim < 1 or out_dim > dim:
        error_message: str = f"Invalid transform shape in {path}: D={dim}, L={out_dim}.\nHint: need 0 < L <= D."
        raise ShapeError(error_message)
    if not shrinkage > 0:
        error_message = f"Invalid shrinkage {shrinkage} in {path}.\nHint: lambda must be positive."
        raise ValidationError(error_message)

    sizes: list[int] = [dim, dim * dim, dim * out_dim, out_dim]
    check_size(path, TRANSFORM_HEADER.size + sum(sizes) * F64_LE.itemsize)
    payload: np.ndarray = np.fromfile(path, dtype=F64_LE, count=sum(sizes), offset=TRANSFORM_HEADER.size)
    check_finite(payload[None, :], what=str(path))
    offsets: np.ndarray = np.cumsum([0, *sizes])
    mean, whitener, rotation, gammas = (
        payload[offsets[i] : offsets[i + 1]].astype(np.float64) for i in range(len(sizes))
    )
    return KooFuTransform(
        shrinkage=float(shrinkage),
        mean=mean,
        whitener=whitener.reshape(dim, dim),
        rotation=rotation.reshape(dim, out_dim),
        gammas=gammas,
    )


def write_transform(transform: KooFuTransform, path: str | Path) -> None:
    """Write a KFTX transform file.

    Parameters
    ----------
    transform : KooFuTransform
        Transform to write.
    path : str or Path
        Destination file.
    """
    with Path(path).open("wb") as handle:
        handle.write(
            TRANSFORM_HEADER.pack(
                TRANSFORM_MAGIC,
                FORMAT_VERSION,
                transform.dim,
                transform.out_dim,
                transform.shrinkage,
            ),
        )
        for array in (transform.mean, transform.whitener, transform.rotation, transform.gammas):
            handle.write(np.ascontiguousarray(array, dtype=F64_LE).tobytes(order="C"))
