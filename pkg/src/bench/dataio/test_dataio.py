"""Testbench for the dataio module.

Covers the KFEB, KFLB and KFTX binary layouts, class tables, class sets and
multi-label ground truth, including malformed files.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

# Add the directory containing the bench_utils.py file to the Python path
sys.path.insert(0, str(Path(__file__).parent.parent.resolve()))

from bench_utils import make_rng, random_dataset, random_stats

from koofu.dataio import (
    EMBEDDING_HEADER,
    TRANSFORM_HEADER,
    EmbeddingDataset,
    MultiLabelGroundTruth,
    read_class_set,
    read_class_table,
    read_embeddings,
    read_ground_truth,
    read_labels,
    read_transform,
    read_vectors,
    write_class_set,
    write_class_table,
    write_embeddings,
    write_ground_truth,
    write_labels,
    write_transform,
    write_vectors,
)
from koofu.errors import FormatError, LabelRangeError, ShapeError, ValidationError
from koofu.transform import KooFuTransform, fit_koofu


@pytest.fixture
def dataset() -> EmbeddingDataset:
    """A small labeled dataset with named classes."""
    vectors: np.ndarray = make_rng(0).standard_normal((6, 4))
    return EmbeddingDataset.from_arrays(vectors, [0, 1, 2, 0, 1, 2], {0: "cat", 1: "dog", 2: "sea lion"})


def dataset_paths(tmp_path: Path) -> tuple[Path, Path, Path]:
    """Vector, label and class-table paths inside ``tmp_path``."""
    return tmp_path / "train.kfeb", tmp_path / "train.kflb", tmp_path / "classes.tsv"


#
# Embeddings
#


def test_embedding_header_size() -> None:
    """The KFEB header is 24 bytes."""
    assert EMBEDDING_HEADER.size == 24


def test_write_empty_vectors(tmp_path: Path) -> None:
    """An empty matrix is a header-only file that reads back with its dimension."""
    path: Path = tmp_path / "empty.kfeb"
    write_vectors(np.zeros((0, 2), dtype=np.float32), path)
    assert path.stat().st_size == 24
    vectors: np.ndarray = read_vectors(path)
    assert vectors.shape == (0, 2)


def test_file_size(tmp_path: Path) -> None:
    """Three 4-dimensional vectors take 24 + 48 bytes."""
    path: Path = tmp_path / "three.kfeb"
    write_vectors(np.ones((3, 4)), path)
    assert path.stat().st_size == 24 + 3 * 4 * 4


def test_embeddings_round_trip(tmp_path: Path, dataset: EmbeddingDataset) -> None:
    """Writing then reading keeps vectors, labels and names bitwise."""
    paths: tuple[Path, Path, Path] = dataset_paths(tmp_path)
    write_embeddings(dataset, *paths)
    for mmap in (False, True):
        loaded: EmbeddingDataset = read_embeddings(*paths, mmap=mmap)
        np.testing.assert_array_equal(loaded.vectors, dataset.vectors)
        np.testing.assert_array_equal(loaded.labels, dataset.labels)
        assert loaded.class_table == dataset.class_table
        assert loaded.vectors.dtype == np.float32


def test_truncated_payload(tmp_path: Path) -> None:
    """A payload one float short is a truncated file."""
    path: Path = tmp_path / "short.kfeb"
    write_vectors(np.ones((3, 4)), path)
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(FormatError, match="Truncated"):
        read_vectors(path)


def test_trailing_payload(tmp_path: Path) -> None:
    """Bytes beyond the declared payload are rejected."""
    path: Path = tmp_path / "long.kfeb"
    write_vectors(np.ones((3, 4)), path)
    path.write_bytes(path.read_bytes() + b"\0\0\0\0")
    with pytest.raises(FormatError, match="Trailing"):
        read_vectors(path)


def test_truncated_header(tmp_path: Path) -> None:
    """A file shorter than the header is rejected."""
    path: Path = tmp_path / "stub.kfeb"
    path.write_bytes(b"KFEB\x01\x00")
    with pytest.raises(FormatError):
        read_vectors(path)


@pytest.mark.parametrize(
    ("offset", "value", "message"),
    [(0, b"XFEB", "magic"), (4, b"\x02\x00", "version"), (6, b"\x01", "dtype"), (7, b"\x01", "flags")],
)
def test_bad_header_fields(tmp_path: Path, offset: int, value: bytes, message: str) -> None:
    """Magic, version, dtype and flags are all checked."""
    path: Path = tmp_path / "bad.kfeb"
    write_vectors(np.ones((2, 2)), path)
    raw: bytearray = bytearray(path.read_bytes())
    raw[offset : offset + len(value)] = value
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match=message):
        read_vectors(path)


def test_non_finite_vectors(tmp_path: Path) -> None:
    """NaN payloads are rejected on read and in memory."""
    path: Path = tmp_path / "nan.kfeb"
    vectors: np.ndarray = np.ones((3, 2), dtype=np.float32)
    vectors[1, 0] = np.nan
    write_vectors(vectors, path)
    with pytest.raises(FormatError, match="first bad row 1"):
        read_vectors(path)
    with pytest.raises(FormatError):
        EmbeddingDataset.from_arrays(vectors, [0, 0, 0])


def test_dataset_invariants() -> None:
    """Labels must match the rows and the class table."""
    with pytest.raises(ShapeError):
        EmbeddingDataset.from_arrays(np.ones((3, 2)), [0, 1])
    with pytest.raises(LabelRangeError):
        EmbeddingDataset.from_arrays(np.ones((2, 2)), [0, 2], {0: "a", 1: "b"})
    with pytest.raises(LabelRangeError):
        EmbeddingDataset.from_arrays(np.ones((2, 2)), [0, -1])
    with pytest.raises(ShapeError):
        EmbeddingDataset.from_arrays(np.ones((2, 0)), [0, 0])


def test_generated_class_names() -> None:
    """Missing class tables get ``class_<id>`` names."""
    dataset = EmbeddingDataset.from_arrays(np.ones((2, 2)), [0, 2])
    assert dataset.class_table == {0: "class_0", 1: "class_1", 2: "class_2"}
    assert (dataset.dim, dataset.count, dataset.num_classes) == (2, 2, 3)


#
# Labels and class tables
#


def test_labels_round_trip(tmp_path: Path) -> None:
    """Labels keep their values and read back as uint32."""
    path: Path = tmp_path / "labels.kflb"
    write_labels(np.array([4, 0, 4_000_000_000]), path)
    labels: np.ndarray = read_labels(path)
    assert labels.dtype == np.uint32
    np.testing.assert_array_equal(labels, [4, 0, 4_000_000_000])


def test_class_table_round_trip(tmp_path: Path) -> None:
    """UTF-8 names survive a write and read."""
    path: Path = tmp_path / "classes.tsv"
    table: dict[int, str] = {0: "goldfish", 1: "großer Hai", 2: "tiger shark"}
    write_class_table(table, path)
    assert read_class_table(path) == table


@pytest.mark.parametrize(
    "content",
    ["0\tcat\n2\tdog\n", "0\tcat\n0\tdog\n", "zero\tcat\n", "0 cat\n"],
)
def test_bad_class_tables(tmp_path: Path, content: str) -> None:
    """Gaps, duplicates, non-integer ids and missing tabs are format errors."""
    path: Path = tmp_path / "classes.tsv"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(FormatError):
        read_class_table(path)


#
# Ground truth and class sets
#


def test_ground_truth_round_trip(tmp_path: Path) -> None:
    """Multi-label ground truth is one JSON record per line."""
    path: Path = tmp_path / "real.jsonl"
    truth = MultiLabelGroundTruth(entries={0: frozenset({2}), 1: frozenset({3, 4})})
    write_ground_truth(truth, path)
    assert path.read_text(encoding="utf-8").splitlines()[1] == '{"index": 1, "labels": [3, 4]}'
    assert read_ground_truth(path) == truth


def test_ground_truth_validation(tmp_path: Path) -> None:
    """Empty label sets, malformed records and unknown classes are rejected."""
    with pytest.raises(ValidationError):
        MultiLabelGroundTruth(entries={0: frozenset()})
    path: Path = tmp_path / "bad.jsonl"
    path.write_text('{"index": 0}\n', encoding="utf-8")
    with pytest.raises(FormatError):
        read_ground_truth(path)
    with pytest.raises(LabelRangeError):
        MultiLabelGroundTruth(entries={0: frozenset({7})}).validate(5)


def test_single_label_ground_truth() -> None:
    """Single labels become singleton sets."""
    truth: MultiLabelGroundTruth = MultiLabelGroundTruth.from_single_labels(np.array([3, 1]))
    assert truth.entries == {0: frozenset({3}), 1: frozenset({1})}


def test_class_set_round_trip(tmp_path: Path) -> None:
    """Class sets keep file order and drop duplicates."""
    path: Path = tmp_path / "set.txt"
    write_class_set([5, 1, 5, 3], path)
    assert read_class_set(path) == [5, 1, 3]
    path.write_text("1\n-2\n", encoding="utf-8")
    with pytest.raises(FormatError):
        read_class_set(path)


#
# Transforms
#


@pytest.fixture
def transform() -> KooFuTransform:
    """A fitted 6→4 transform."""
    return fit_koofu(random_stats(make_rng(1), 6, 5), 0.5, 4)


def test_transform_round_trip(tmp_path: Path, transform: KooFuTransform) -> None:
    """Every matrix of a transform reads back bitwise."""
    path: Path = tmp_path / "koofu.kftx"
    write_transform(transform, path)
    assert path.stat().st_size == TRANSFORM_HEADER.size + 8 * (6 + 36 + 24 + 4)
    loaded: KooFuTransform = read_transform(path)
    assert loaded.shrinkage == transform.shrinkage
    for name in ("mean", "whitener", "rotation", "gammas", "projection"):
        np.testing.assert_array_equal(getattr(loaded, name), getattr(transform, name), err_msg=name)
    assert loaded.fingerprint() == transform.fingerprint()


def patch_header(path: Path, **fields: float) -> None:
    """Rewrite header fields of a KFTX file in place."""
    magic, version, dim, out_dim, shrinkage = TRANSFORM_HEADER.unpack(path.read_bytes()[: TRANSFORM_HEADER.size])
    values: dict[str, float] = {"dim": dim, "out_dim": out_dim, "shrinkage": shrinkage} | fields
    header: bytes = TRANSFORM_HEADER.pack(magic, version, values["dim"], values["out_dim"], values["shrinkage"])
    path.write_bytes(header + path.read_bytes()[TRANSFORM_HEADER.size :])


@pytest.mark.parametrize("out_dim", [0, 7])
def test_transform_out_dim_out_of_range(tmp_path: Path, transform: KooFuTransform, out_dim: int) -> None:
    """A header with L < 1 or L > D is a shape error."""
    path: Path = tmp_path / "koofu.kftx"
    write_transform(transform, path)
    patch_header(path, out_dim=out_dim)
    with pytest.raises(ShapeError):
        read_transform(path)


@pytest.mark.parametrize("shrinkage", [0.0, -1.0])
def test_transform_non_positive_shrinkage(tmp_path: Path, transform: KooFuTransform, shrinkage: float) -> None:
    """A header with λ <= 0 is a validation error."""
    path: Path = tmp_path / "koofu.kftx"
    write_transform(transform, path)
    patch_header(path, shrinkage=shrinkage)
    with pytest.raises(ValidationError):
        read_transform(path)


def test_memory_map_large_rows(tmp_path: Path) -> None:
    """Memory-mapped reads equal loaded reads."""
    vectors: np.ndarray = random_dataset(make_rng(2), num_classes=3, dim=16, per_class=50).vectors
    path: Path = tmp_path / "big.kfeb"
    write_vectors(vectors, path)
    np.testing.assert_array_equal(read_vectors(path, mmap=True), read_vectors(path))
