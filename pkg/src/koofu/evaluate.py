"""Library for accuracy metrics, evaluation protocols and sweeps.

A protocol run goes through named stages: ``load`` → ``fit`` → ``transform``
→ ``index`` → ``classify`` → ``metrics``. Any failure is re-raised as a
:class:`koofu.errors.ProtocolError` naming the stage. Only the search in the
``classify`` stage is timed.

Accuracies are kept as exact integer fractions next to their float value so
that report tables never depend on float printing.
"""

from __future__ import annotations

import json
import logging
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, TYPE_CHECKING, Literal

import numpy as np
from tabulate import tabulate

from koofu.classify import (
    DEFAULT_INDEX_BLOCK,
    DEFAULT_QUERY_BLOCK,
    PrototypeBank,
    aggregate_text_prototypes,
    build_index,
    build_prototypes,
    group_by_label,
    knn_classify,
    nvp_classify,
    restrict_bank,
    restrict_index,
    transform_bank,
)
from koofu.dataio import (
    EmbeddingDataset,
    MultiLabelGroundTruth,
    read_class_set,
    read_embeddings,
    read_ground_truth,
    read_labels,
    read_transform,
    read_vectors,
)
from koofu.errors import KoofuError, ProtocolError, ValidationError
from koofu.stats import ScatterStats, accumulate
from koofu.transform import KooFuTransform, LdaTransform, apply, fit_koofu, fit_lda
from koofu.utils import log_parameters, normalize_rows

if TYPE_CHECKING:
    from collections.abc import Callable, Iterable, Iterator, Sequence

logger = logging.getLogger(__name__)

DEFAULT_TIMING_REPEATS: int = 3

Space = Literal["raw", "koofu", "lda"]
Classifier = Literal["nvp", "knn", "zeroshot"]
SweepAxis = Literal["lambda", "out_dim", "k"]

SPACES: tuple[str, ...] = ("raw", "koofu", "lda")
CLASSIFIERS: tuple[str, ...] = ("nvp", "knn", "zeroshot")
SWEEP_AXES: tuple[str, ...] = ("lambda", "out_dim", "k")


#
# Metrics
#


@dataclass(frozen=True)
class Accuracy:
    """An accuracy as an exact fraction.

    Attributes
    ----------
    correct : int
        Number of correctly classified queries.
    total : int
        Number of evaluated queries.
    """

    correct: int
    total: int

    def __post_init__(self) -> None:
        """Check ``0 <= correct <= total``."""
        if not 0 <= self.correct <= self.total:
            error_message: str = f"Invalid accuracy fraction {self.correct}/{self.total}."
            raise ValidationError(error_message)

    @property
    def value(self) -> float:
        """``correct / total``, 0.0 when nothing was evaluated."""
        return self.correct / self.total if self.total else 0.0

    def to_dict(self) -> dict[str, int | float]:
        """Return the JSON form ``{"correct", "total", "value"}``."""
        return {"correct": self.correct, "total": self.total, "value": self.value}


def _check_width(ranked: np.ndarray, k: int | None) -> tuple[np.ndarray, int]:
    ranked = np.atleast_2d(np.asarray(ranked))
    width: int = ranked.shape[1] if k is None else k
    if width < 1 or ranked.shape[1] < width:
        error_message: str = f"Top-{width} accuracy needs at least {width} ranked ids, got {ranked.shape[1]}."
        raise ValidationError(error_message)
    return ranked[:, :width], width


def topk_accuracy(ranked: np.ndarray, gt: np.ndarray, k: int | None = None) -> Accuracy:
    """Fraction of queries whose true class is among the first k ranked ids.

    Parameters
    ----------
    ranked : np.ndarray
        N×w ranked class ids, best first.
    gt : np.ndarray
        N true class ids.
    k : int, optional
        Cut-off, at most w (default is w).

    Returns
    -------
    Accuracy
        Correct queries over N.

    Examples
    --------
    >>> ranked = np.array([[1, 2, 3, 4, 5, 6]] * 4)
    >>> topk_accuracy(ranked, np.array([1, 3, 6, 2]), k=5).to_dict()
    {'correct': 3, 'total': 4, 'value': 0.75}
    """
    top, _ = _check_width(ranked, k)
    gt = np.asarray(gt).reshape(-1)
    if gt.shape[0] != top.shape[0]:
        error_message: str = f"Got {gt.shape[0]} ground-truth labels for {top.shape[0]} ranked rows."
        raise ValidationError(error_message)
    return Accuracy(correct=int(np.any(top == gt[:, None], axis=1).sum()), total=int(gt.shape[0]))


def real_accuracy(ranked: np.ndarray, gt: MultiLabelGroundTruth, k: int | None = None) -> Accuracy:
    """Multi-label accuracy: a row is correct if its top-k shares any label with its set.

    Rows without a ground-truth entry are left out of the denominator.

    Parameters
    ----------
    ranked : np.ndarray
        N×w ranked class ids, best first.
    gt : MultiLabelGroundTruth
        Acceptable labels keyed by row index.
    k : int, optional
        Cut-off, at most w (default is w).

    Returns
    -------
    Accuracy
        Correct rows over rows with ground truth.
    """
    top, _ = _check_width(ranked, k)
    correct: int = 0
    total: int = 0
    for index, row in enumerate(top):
        labels: frozenset[int] | None = gt.entries.get(index)
        if labels is None:
            continue
        total += 1
        correct += not labels.isdisjoint(int(label) for label in row)
    return Accuracy(correct=correct, total=total)


#
# Configuration
#


@dataclass(frozen=True)
class DatasetPaths:
    """Files of one labeled split.

    Attributes
    ----------
    vectors : Path
        KFEB embeddings.
    labels : Path
        KFLB labels.
    classes : Path or None
        TSV class table; names are generated when omitted.
    """

    vectors: Path
    labels: Path
    classes: Path | None = None

    def load(self) -> EmbeddingDataset:
        """Read the split."""
        if self.classes is not None:
            return read_embeddings(self.vectors, self.labels, self.classes)
        return EmbeddingDataset.from_arrays(read_vectors(self.vectors), read_labels(self.labels))


@dataclass(frozen=True)
class FitSettings:
    """How the transform of a protocol is fitted.

    Attributes
    ----------
    shrinkage : float
        Regularization λ.
    out_dim : int or "full"
        Output dimension L; "full" keeps D (Koo-Fu) or K-1 (LDA).
    weighting : {"count", "uniform"}
        Between-class weighting of the Koo-Fu fit.
    """

    shrinkage: float = 150.0
    out_dim: int | str = "full"
    weighting: str = "count"


@dataclass(frozen=True)
class ProtocolConfig:
    """Everything a protocol run needs.

    Attributes
    ----------
    train, test : DatasetPaths or None
        Fitting/index split and query split. May be None when the data is
        passed in memory.
    space : {"raw", "koofu", "lda"}
        Embedding space the classifier runs in.
    fit : FitSettings
        Transform settings, ignored in the raw space.
    transform : Path or None
        Pre-fitted KFTX transform used instead of fitting (koofu space).
    classifier : {"nvp", "knn", "zeroshot"}
        Classifier to evaluate.
    metric : {"cosine", "euclidean"}
        Similarity of the search.
    k : int
        Neighbors of the k-NN vote.
    top_k : tuple[int, ...]
        Cut-offs reported for ranking classifiers.
    prototype_mode : str
        Prototype construction mode of :func:`koofu.classify.build_prototypes`.
    text : DatasetPaths or None
        Text embeddings whose labels name the prompted class (zeroshot).
    class_set : Path or None
        Class-set file restricting the bank or index.
    ground_truth : Path or None
        Multi-label ground truth of the queries; adds ReaL metrics.
    timing_repeats : int
        Repetitions of the timed search.
    threads : int or None
        Worker threads of the search.
    query_block, index_block : int
        Search block sizes.
    """

    train: DatasetPaths | None = None
    test: DatasetPaths | None = None
    space: Space = "koofu"
    fit: FitSettings = field(default_factory=FitSettings)
    transform: Path | None = None
    classifier: Classifier = "nvp"
    metric: str = "cosine"
    k: int = 15
    top_k: tuple[int, ...] = (1, 5)
    prototype_mode: str = "mean-then-normalize"
    text: DatasetPaths | None = None
    class_set: Path | None = None
    ground_truth: Path | None = None
    timing_repeats: int = DEFAULT_TIMING_REPEATS
    threads: int | None = None
    query_block: int = DEFAULT_QUERY_BLOCK
    index_block: int = DEFAULT_INDEX_BLOCK

    def __post_init__(self) -> None:
        """Reject invalid combinations."""
        if self.space not in SPACES or self.classifier not in CLASSIFIERS:
            error_message: str = f"Unknown space {self.space!r} or classifier {self.classifier!r}."
            raise ValidationError(error_message)
        if self.classifier == "zeroshot" and self.metric != "cosine":
            error_message = "Textual prototypes are compared by cosine similarity only.\nHint: use --metric cosine."
            raise ValidationError(error_message)
        if self.transform is not None and self.space != "koofu":
            error_message = "A pre-fitted transform only applies to the koofu space."
            raise ValidationError(error_message)
        if self.k < 1 or not self.top_k or min(self.top_k) < 1 or self.timing_repeats < 1:
            error_message = f"Invalid k={self.k}, top_k={self.top_k} or timing_repeats={self.timing_repeats}."
            raise ValidationError(error_message)

    def describe(self) -> dict[str, object]:
        """Return the config block of a report."""
        return {
            "space": self.space,
            "lambda": None if self.space == "raw" else self.fit.shrinkage,
            "out_dim": None if self.space == "raw" else self.fit.out_dim,
            "weighting": None if self.space != "koofu" else self.fit.weighting,
            "metric": self.metric,
            "classifier": self.classifier,
            "k": self.k if self.classifier == "knn" else None,
            "class_set": None if self.class_set is None else Path(self.class_set).stem,
        }


@dataclass(frozen=True)
class ProtocolData:
    """Inputs of a protocol run, loaded once and shared by sweep points.

    Attributes
    ----------
    train : EmbeddingDataset
        Fitting and index split.
    test : EmbeddingDataset
        Query split.
    text : EmbeddingDataset or None
        Text embeddings labeled by prompted class.
    ground_truth : MultiLabelGroundTruth or None
        Multi-label ground truth of the queries.
    class_set : list[int] or None
        Classes the bank or index is restricted to.
    provenance : dict[str, str]
        Identifiers of the inputs.
    """

    train: EmbeddingDataset
    test: EmbeddingDataset
    text: EmbeddingDataset | None = None
    ground_truth: MultiLabelGroundTruth | None = None
    class_set: list[int] | None = None
    provenance: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class ResourceUsage:
    """Search cost of one protocol run.

    Attributes
    ----------
    search_seconds : float
        Median wall time of the repeated search.
    index_bytes : int
        Size of the searched matrix in float32, ``rows · dim · 4``.
    timings : tuple[float, ...]
        Every repetition.
    """

    search_seconds: float
    index_bytes: int
    timings: tuple[float, ...] = ()


@dataclass(frozen=True)
class EvalReport:
    """Result of one protocol run or sweep point.

    Attributes
    ----------
    config : dict[str, object]
        :meth:`ProtocolConfig.describe` plus the sweep value, if any.
    metrics : dict[str, Accuracy]
        ``top{k}`` and, with multi-label ground truth, ``real_top{k}``.
    resources : dict[str, float | int]
        Phase wall times in seconds and ``index_bytes``.
    provenance : dict[str, str | None]
        Dataset and transform identifiers.
    error : str or None
        Failure of a sweep point, with its stage.
    """

    config: dict[str, object]
    metrics: dict[str, Accuracy] = field(default_factory=dict)
    resources: dict[str, float | int] = field(default_factory=dict)
    provenance: dict[str, str | None] = field(default_factory=dict)
    error: str | None = None

    def to_dict(self) -> dict[str, object]:
        """Return the JSON form of the report."""
        return {
            "config": self.config,
            "metrics": {name: accuracy.to_dict() for name, accuracy in self.metrics.items()},
            "resources": self.resources,
            "provenance": self.provenance,
            "error": self.error,
        }

    def to_json(self) -> str:
        """Serialize on one line."""
        return json.dumps(self.to_dict(), sort_keys=False)


#
# Protocol
#


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Re-raise any error inside the block as a :class:`ProtocolError` naming ``name``."""
    try:
        yield
    except ProtocolError:
        raise
    except Exception as e:
        raise ProtocolError(name, e) from e


def measure_resources(
    search: Callable[[], object],
    *,
    rows: int,
    dim: int,
    repeats: int = DEFAULT_TIMING_REPEATS,
) -> tuple[object, ResourceUsage]:
    """Time a search and account for the memory of the searched matrix.

    Parameters
    ----------
    search : Callable[[], object]
        Runs the search phase only; called ``repeats`` times.
    rows : int
        Rows of the searched index or bank.
    dim : int
        Their dimension.
    repeats : int, optional
        Repetitions whose median is reported (default is 3).

    Returns
    -------
    result : object
        Output of the last call.
    usage : ResourceUsage
        Median wall time and ``rows · dim · 4`` bytes.
    """
    if repeats < 1:
        error_message: str = f"Need at least one timing repetition, got {repeats}."
        raise ValidationError(error_message)
    timings: list[float] = []
    result: object = None
    for _ in range(repeats):
        start: float = time.perf_counter()
        result = search()
        timings.append(time.perf_counter() - start)
    usage = ResourceUsage(search_seconds=statistics.median(timings), index_bytes=rows * dim * 4, timings=tuple(timings))
    return result, usage


def load_protocol_data(config: ProtocolConfig) -> ProtocolData:
    """Read every input file a protocol names.

    Raises
    ------
    ProtocolError
        From the ``load`` stage.
    """
    with stage("load"):
        if config.train is None or config.test is None:
            error_message: str = "Protocol needs train and test files.\nHint: pass --train-* and --test-* paths."
            raise ValidationError(error_message)
        train: EmbeddingDataset = config.train.load()
        test: EmbeddingDataset = config.test.load()
        text: EmbeddingDataset | None = None if config.text is None else config.text.load()
        if config.classifier == "zeroshot" and text is None:
            error_message = "Zero-shot classification needs text embeddings.\nHint: pass --text and --text-labels."
            raise ValidationError(error_message)
        ground_truth: MultiLabelGroundTruth | None = None
        if config.ground_truth is not None:
            ground_truth = read_ground_truth(config.ground_truth)
        class_set: list[int] | None = None if config.class_set is None else read_class_set(config.class_set)
        provenance: dict[str, str] = {"train": str(config.train.vectors), "test": str(config.test.vectors)}
    return ProtocolData(
        train=train,
        test=test,
        text=text,
        ground_truth=ground_truth,
        class_set=class_set,
        provenance=provenance,
    )


def fit_transform(config: ProtocolConfig, data: ProtocolData) -> KooFuTransform | LdaTransform | None:
    """Fit (or read) the transform of a protocol's space.

    Returns None in the raw space.
    """
    if config.space == "raw":
        return None
    with stage("fit"):
        if config.transform is not None:
            return read_transform(config.transform)
        stats: ScatterStats = accumulate(ScatterStats.empty(data.train.dim, data.train.num_classes), data.train)
        if config.space == "lda":
            present: int = int(np.count_nonzero(stats.counts))
            out_dim: int = present - 1 if config.fit.out_dim == "full" else int(config.fit.out_dim)
            return fit_lda(stats, config.fit.shrinkage, min(out_dim, stats.dim))
        return fit_koofu(stats, config.fit.shrinkage, config.fit.out_dim, weighting=config.fit.weighting)


def _build_bank(
    config: ProtocolConfig,
    data: ProtocolData,
    transform: KooFuTransform | LdaTransform | None,
) -> PrototypeBank:
    if config.classifier == "zeroshot":
        assert data.text is not None
        class_ids, groups = group_by_label(data.text.vectors, data.text.labels)
        bank: PrototypeBank = aggregate_text_prototypes(groups, class_ids)
        return bank if transform is None else transform_bank(bank, transform)
    return build_prototypes(data.train, transform, config.metric, mode=config.prototype_mode)  # type: ignore[arg-type]


def evaluate_protocol(
    config: ProtocolConfig,
    data: ProtocolData,
    transform: KooFuTransform | LdaTransform | None = None,
) -> EvalReport:
    """Run a protocol on loaded data.

    Parameters
    ----------
    config : ProtocolConfig
        Protocol settings.
    data : ProtocolData
        Loaded inputs.
    transform : KooFuTransform or LdaTransform, optional
        Already fitted transform; fitted from ``data.train`` when omitted and
        the space is not raw.

    Returns
    -------
    EvalReport
        Metrics, phase timings and provenance.

    Raises
    ------
    ProtocolError
        Naming the failing stage.
    """
    resources: dict[str, float | int] = {}
    start: float = time.perf_counter()
    if transform is None:
        transform = fit_transform(config, data)
    resources["fit_seconds"] = time.perf_counter() - start

    with stage("transform"):
        start = time.perf_counter()
        cosine: bool = config.metric == "cosine"
        if transform is not None:
            queries: np.ndarray = apply(transform, data.test.vectors, renormalize=cosine)
        elif cosine:
            queries, _ = normalize_rows(np.asarray(data.test.vectors))
        else:
            queries = np.asarray(data.test.vectors)
        resources["transform_seconds"] = time.perf_counter() - start

    with stage("index"):
        start = time.perf_counter()
        if config.classifier == "knn":
            index = build_index(data.train, transform, config.metric)  # type: ignore[arg-type]
            if data.class_set is not None:
                index = restrict_index(index, data.class_set)
            rows, dim = index.count, index.dim
        else:
            bank: PrototypeBank = _build_bank(config, data, transform)
            if data.class_set is not None:
                bank = restrict_bank(bank, data.class_set)
            rows, dim = bank.num_classes, bank.dim
        resources["index_seconds"] = time.perf_counter() - start

    with stage("classify"):
        search_options: dict[str, int | None] = {
            "query_block": config.query_block,
            "index_block": config.index_block,
            "threads": config.threads,
        }
        if config.classifier == "knn":
            cutoffs: list[int] = [1]
            result, usage = measure_resources(
                lambda: knn_classify(queries, index, config.k, **search_options),
                rows=rows,
                dim=dim,
                repeats=config.timing_repeats,
            )
            ranked: np.ndarray = result.labels[:, None]  # type: ignore[attr-defined]
        else:
            cutoffs = sorted(k for k in set(config.top_k) if k <= rows)
            dropped: list[int] = sorted(k for k in set(config.top_k) if k > rows)
            if dropped:
                logger.warning("Skipping top-%s: the bank holds only %d classes", dropped, rows)
            ranked, usage = measure_resources(
                lambda: nvp_classify(queries, bank, max(cutoffs), **search_options),
                rows=rows,
                dim=dim,
                repeats=config.timing_repeats,
            )
        resources["search_seconds"] = usage.search_seconds
        resources["index_bytes"] = usage.index_bytes

    with stage("metrics"):
        metrics: dict[str, Accuracy] = {f"top{k}": topk_accuracy(ranked, data.test.labels, k) for k in cutoffs}
        if data.ground_truth is not None:
            data.ground_truth.validate(max(data.train.num_classes, data.test.num_classes))
            metrics |= {f"real_top{k}": real_accuracy(ranked, data.ground_truth, k) for k in cutoffs}

    provenance: dict[str, str | None] = {
        **data.provenance,
        "transform_id": None if transform is None else transform.fingerprint(),
    }
    report = EvalReport(config=config.describe(), metrics=metrics, resources=resources, provenance=provenance)
    logger.info("%s", " ".join(f"{name}={accuracy.value:.4f}" for name, accuracy in metrics.items()))
    return report


def run_protocol(config: ProtocolConfig, data: ProtocolData | None = None) -> EvalReport:
    """Load, fit, transform, index, classify and score.

    Parameters
    ----------
    config : ProtocolConfig
        Protocol settings.
    data : ProtocolData, optional
        Preloaded inputs; read from the config's paths when omitted.

    Returns
    -------
    EvalReport
        The report.
    """
    log_parameters(logger, config.describe(), title="protocol")
    if data is None:
        data = load_protocol_data(config)
    return evaluate_protocol(config, data)


#
# Sweeps
#


def _point_config(config: ProtocolConfig, axis: SweepAxis, value: float | str) -> ProtocolConfig:
    if axis == "lambda":
        return replace(config, fit=replace(config.fit, shrinkage=float(value)))
    if axis == "out_dim":
        return replace(config, fit=replace(config.fit, out_dim=value if value == "full" else int(value)))
    return replace(config, k=int(value))


def _truncated(transform: KooFuTransform | LdaTransform | None, out_dim: int | str) -> KooFuTransform | LdaTransform:
    if isinstance(transform, KooFuTransform):
        return transform if out_dim == "full" else transform.truncate(int(out_dim))
    if isinstance(transform, LdaTransform):
        if out_dim == "full":
            return transform
        if not 1 <= int(out_dim) <= transform.out_dim:
            error_message: str = f"Cannot truncate an LDA transform with L={transform.out_dim} to {out_dim}."
            raise ValidationError(error_message)
        return replace(
            transform,
            projection=transform.projection[: int(out_dim)],
            eigenvalues=transform.eigenvalues[: int(out_dim)],
        )
    error_message = "Output-dimension sweeps need the koofu or lda space."
    raise ValidationError(error_message)


def sweep(
    axis: SweepAxis,
    values: Sequence[float | str],
    config: ProtocolConfig,
    data: ProtocolData | None = None,
    *,
    parallel: bool = False,
    threads: int | None = None,
) -> list[EvalReport]:
    """Evaluate a protocol at every value of one parameter.

    ``out_dim`` and ``k`` sweeps fit one transform and reuse it; ``out_dim``
    points truncate the full fit. A failing point yields a report carrying the
    error and the remaining points still run.

    Parameters
    ----------
    axis : {"lambda", "out_dim", "k"}
        Swept parameter.
    values : Sequence[float or str]
        Parameter values, in report order.
    config : ProtocolConfig
        Base protocol.
    data : ProtocolData, optional
        Preloaded inputs.
    parallel : bool, optional
        Run points concurrently; timings are then contended.
    threads : int, optional
        Worker count of a parallel sweep.

    Returns
    -------
    list[EvalReport]
        One report per value.
    """
    if axis not in SWEEP_AXES:
        error_message: str = f"Unknown sweep axis {axis!r}.\nHint: use one of {', '.join(SWEEP_AXES)}."
        raise ValidationError(error_message)
    if not values:
        error_message = "A sweep needs at least one value."
        raise ValidationError(error_message)
    if data is None:
        data = load_protocol_data(config)

    shared: KooFuTransform | LdaTransform | None = None
    shared_error: ProtocolError | None = None
    try:
        if axis == "out_dim":
            shared = fit_transform(replace(config, fit=replace(config.fit, out_dim="full")), data)
        elif axis == "k":
            shared = fit_transform(config, data)
    except ProtocolError as e:
        shared_error = e

    def run_point(value: float | str) -> EvalReport:
        point: ProtocolConfig | None = None
        try:
            point = _point_config(config, axis, value)
            if shared_error is not None:
                raise shared_error
            transform: KooFuTransform | LdaTransform | None = shared
            if axis == "out_dim":
                with stage("transform"):
                    transform = _truncated(shared, point.fit.out_dim)
            report: EvalReport = evaluate_protocol(point, data, transform)
        except (KoofuError, ValueError) as e:
            logger.error("Sweep point %s=%s failed: %s", axis, value, e)
            described: dict[str, object] = point.describe() if point is not None else config.describe()
            return EvalReport(config={**described, "sweep": {axis: value}}, error=str(e))
        return replace(report, config={**report.config, "sweep": {axis: value}})

    if parallel and len(values) > 1:
        logger.warning("Running %d sweep points in parallel: search timings are contended", len(values))
        with ThreadPoolExecutor(max_workers=threads) as executor:
            return list(executor.map(run_point, values))
    return [run_point(value) for value in values]


#
# Reports
#


def write_reports_jsonl(reports: Iterable[EvalReport], destination: str | Path | IO[str]) -> None:
    """Write one JSON line per report.

    Parameters
    ----------
    reports : Iterable[EvalReport]
        Reports to write.
    destination : str, Path or text stream
        File path or open stream.
    """
    lines: str = "".join(report.to_json() + "\n" for report in reports)
    if isinstance(destination, str | Path):
        Path(destination).write_text(lines, encoding="utf-8")
    else:
        destination.write(lines)


def format_report_table(reports: Sequence[EvalReport]) -> str:
    """Render reports as an aligned table, one row per report.

    Parameters
    ----------
    reports : Sequence[EvalReport]
        Reports to render.

    Returns
    -------
    str
        A ``tabulate`` grid with the config, accuracies in percent and search
        time.
    """
    metric_names: list[str] = sorted({name for report in reports for name in report.metrics}, key=_metric_order)
    headers: list[str] = ["space", "lambda", "out_dim", "metric", "classifier", "k", "class_set"]
    rows: list[list[object]] = []
    for report in reports:
        row: list[object] = [report.config.get(name) for name in headers]
        row += [
            f"{100 * report.metrics[name].value:.2f}" if name in report.metrics else "" for name in metric_names
        ]
        row += [report.resources.get("search_seconds", ""), report.error or ""]
        rows.append(row)
    return tabulate(rows, headers=[*headers, *metric_names, "search_s", "error"], tablefmt="grid", missingval="-")


def _metric_order(name: str) -> tuple[bool, int]:
    multi_label: bool = name.startswith("real_")
    return multi_label, int(name.removeprefix("real_").removeprefix("top"))
