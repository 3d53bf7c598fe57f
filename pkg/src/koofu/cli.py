"""Command line interface of koofu.

Subcommands: ``fit``, ``apply``, ``prototypes``, ``classify``, ``eval``,
``sweep``, ``synth``, ``verify`` and ``floor``. Results go to files or
stdout, logs to stderr. Exit codes: 0 on success, 2 on validation errors, 3
on numeric failures and 4 on I/O or format errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from koofu.classify import (
    METRICS,
    PROTOTYPE_MODES,
    aggregate_text_prototypes,
    build_index,
    build_prototypes,
    group_by_label,
    knn_classify,
    load_bank,
    nvp_classify,
    save_bank,
    transform_bank,
)
from koofu.dataio import (
    EMBEDDING_MAGIC,
    LABEL_MAGIC,
    TRANSFORM_MAGIC,
    read_embeddings,
    read_labels,
    read_transform,
    read_vectors,
    write_class_table,
    write_labels,
    write_transform,
    write_vectors,
)
from koofu.errors import EXIT_OK, NonPositiveEigenvalueError, ValidationError, exit_code_for
from koofu.evaluate import (
    CLASSIFIERS,
    SPACES,
    SWEEP_AXES,
    DatasetPaths,
    FitSettings,
    ProtocolConfig,
    format_report_table,
    run_protocol,
    sweep,
    write_reports_jsonl,
)
from koofu.stats import STATS_MAGIC, accumulate_shards, load_stats, save_stats
from koofu.stats import check_invariants as check_stats_invariants
from koofu.synth import DEFAULT_SEED, BenchmarkSettings, generate_benchmark
from koofu.transform import apply, fit_koofu, lambda_floor
from koofu.transform import check_invariants as check_transform_invariants
from koofu.utils import log_parameters, resolve_threads

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from koofu.classify import PrototypeBank
    from koofu.dataio import EmbeddingDataset
    from koofu.evaluate import EvalReport
    from koofu.stats import ScatterStats

logger = logging.getLogger("koofu")

LOG_FORMAT: str = "%(levelname)-8s %(name)s: %(message)s"


def _out_dim(value: str) -> int | str:
    if value == "full":
        return value
    try:
        out_dim: int = int(value)
    except ValueError as e:
        error_message: str = f"invalid output dimension {value!r}, expected a positive integer or 'full'"
        raise argparse.ArgumentTypeError(error_message) from e
    if out_dim < 1:
        error_message = f"output dimension must be positive, got {out_dim}"
        raise argparse.ArgumentTypeError(error_message)
    return out_dim


def _positive_int(value: str) -> int:
    try:
        number: int = int(value)
    except ValueError as e:
        error_message: str = f"invalid positive integer {value!r}"
        raise argparse.ArgumentTypeError(error_message) from e
    if number < 1:
        error_message = f"expected a positive integer, got {number}"
        raise argparse.ArgumentTypeError(error_message)
    return number


def _seed(value: str) -> int:
    seed: int = int(value)
    if not 0 <= seed < 2**64:
        error_message: str = f"seed must be a 64-bit unsigned integer, got {seed}"
        raise argparse.ArgumentTypeError(error_message)
    return seed


#
# Subcommands
#


def cmd_fit(args: argparse.Namespace) -> int:
    """Accumulate statistics from shards or a checkpoint and write a KFTX transform."""
    if args.from_stats is not None:
        stats: ScatterStats = load_stats(args.from_stats)
    else:
        if args.classes is None:
            error_message: str = "--classes is required with --shard.\nHint: pass the TSV class table."
            raise ValidationError(error_message)
        shards: list[EmbeddingDataset] = [
            read_embeddings(vectors, labels, args.classes, mmap=True) for vectors, labels in args.shard
        ]
        stats = accumulate_shards(shards, shards[0].num_classes, threads=args.threads)
    if args.stats_out is not None:
        save_stats(stats, args.stats_out)
        logger.info("Wrote statistics checkpoint %s", args.stats_out)

    try:
        transform = fit_koofu(stats, args.shrinkage, args.out_dim, weighting=args.weighting)
    except NonPositiveEigenvalueError as e:
        print(f"lambda {args.shrinkage:g} is below the validity floor", file=sys.stderr)
        print(f"smallest usable lambda: {e.suggested_lambda:g}", file=sys.stderr)
        raise
    violations: list[str] = check_transform_invariants(transform)
    for violation in violations:
        logger.warning("Transform invariant violated: %s", violation)
    write_transform(transform, args.output)
    logger.info("Wrote transform %s (D=%d, L=%d)", args.output, transform.dim, transform.out_dim)
    return EXIT_OK


def cmd_apply(args: argparse.Namespace) -> int:
    """Map an embedding file through a transform."""
    transform = read_transform(args.transform)
    vectors: np.ndarray = read_vectors(args.input, mmap=True)
    write_vectors(apply(transform, vectors, renormalize=args.renormalize), args.output)
    return EXIT_OK


def cmd_prototypes(args: argparse.Namespace) -> int:
    """Build a visual or textual prototype bank."""
    transform = None if args.transform is None else read_transform(args.transform)
    if args.text is not None:
        class_ids, groups = group_by_label(read_vectors(args.text), read_labels(args.text_labels))
        bank: PrototypeBank = aggregate_text_prototypes(groups, class_ids)
        if transform is not None:
            bank = transform_bank(bank, transform)
    else:
        dataset: EmbeddingDataset = read_embeddings(args.embeddings, args.labels, args.classes)
        bank = build_prototypes(dataset, transform, args.metric, mode=args.mode)
    save_bank(bank, args.output)
    logger.info("Wrote %d %s prototypes to %s", bank.num_classes, bank.modality, args.output)
    return EXIT_OK


def cmd_classify(args: argparse.Namespace) -> int:
    """Classify query embeddings; one line of class ids per query."""
    transform = None if args.transform is None else read_transform(args.transform)
    bank: PrototypeBank | None = None if args.bank is None else load_bank(args.bank)
    if bank is not None:
        expected: str | None = None if transform is None else transform.fingerprint()
        if bank.transform_id != expected:
            error_message: str = (
                f"Bank {args.bank} was built behind transform {bank.transform_id}, "
                f"but queries are mapped by {expected}.\nHint: pass the --transform the bank was built with."
            )
            raise ValidationError(error_message)
    metric: str = args.metric if bank is None else bank.metric
    queries: np.ndarray = read_vectors(args.queries)
    if transform is not None:
        queries = apply(transform, queries, renormalize=metric == "cosine")
    search_options: dict[str, int | None] = {"threads": args.threads}
    if bank is not None:
        ranked: np.ndarray = nvp_classify(queries, bank, args.top_k, **search_options)
    else:
        dataset: EmbeddingDataset = read_embeddings(args.index_embeddings, args.index_labels, args.index_classes)
        index = build_index(dataset, transform, args.metric)
        ranked = knn_classify(queries, index, args.k, **search_options).labels[:, None]
    lines: str = "".join(" ".join(str(int(label)) for label in row) + "\n" for row in ranked)
    if args.output is None:
        sys.stdout.write(lines)
    else:
        Path(args.output).write_text(lines, encoding="utf-8")
    return EXIT_OK


def _protocol_config(args: argparse.Namespace) -> ProtocolConfig:
    text: DatasetPaths | None = None
    if args.text_embeddings is not None:
        text = DatasetPaths(vectors=args.text_embeddings, labels=args.text_labels)
    return ProtocolConfig(
        train=DatasetPaths(args.train_embeddings, args.train_labels, args.train_classes),
        test=DatasetPaths(args.test_embeddings, args.test_labels, args.test_classes),
        space=args.space,
        fit=FitSettings(shrinkage=args.shrinkage, out_dim=args.out_dim, weighting=args.weighting),
        transform=args.transform,
        classifier=args.classifier,
        metric=args.metric,
        k=args.k,
        top_k=tuple(args.top_k),
        prototype_mode=args.mode,
        text=text,
        class_set=args.class_set,
        ground_truth=args.ground_truth,
        timing_repeats=args.repeats,
        threads=args.threads,
    )


def _emit_reports(reports: Sequence[EvalReport], report_path: Path | None) -> None:
    if report_path is not None:
        write_reports_jsonl(reports, report_path)
        logger.info("Wrote %d reports to %s", len(reports), report_path)
    sys.stdout.write(format_report_table(reports) + "\n")


def cmd_eval(args: argparse.Namespace) -> int:
    """Run one evaluation protocol."""
    _emit_reports([run_protocol(_protocol_config(args))], args.report)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    """Run a protocol at several values of one parameter."""
    values: list[float | str] = [_sweep_value(args.axis, value) for value in args.values]
    reports: list[EvalReport] = sweep(
        args.axis, values, _protocol_config(args), parallel=args.parallel, threads=args.threads
    )
    _emit_reports(reports, args.report)
    return EXIT_OK


def _sweep_value(axis: str, value: str) -> float | str:
    try:
        if axis == "lambda":
            return float(value)
        return _out_dim(value) if axis == "out_dim" else _positive_int(value)
    except (ValueError, argparse.ArgumentTypeError) as e:
        error_message: str = f"Invalid {axis} value {value!r}."
        raise ValidationError(error_message) from e


def cmd_synth(args: argparse.Namespace) -> int:
    """Write a deterministic synthetic benchmark."""
    settings = BenchmarkSettings(
        num_classes=args.num_classes,
        dim=args.dim,
        per_class=args.per_class,
        test_per_class=args.test_per_class,
        condition=args.condition,
        separation=args.separation,
        seed=args.seed,
    )
    train, test = generate_benchmark(settings)
    output_dir: Path = args.output_dir
    output_dir.mkdir(parents=True, exist_ok=True)
    for name, split in (("train", train), ("test", test)):
        write_vectors(split.vectors, output_dir / f"{name}.kfeb")
        write_labels(split.labels, output_dir / f"{name}.kflb")
    write_class_table(train.class_table, output_dir / "classes.tsv")
    logger.info("Wrote benchmark to %s", output_dir)
    return EXIT_OK


def _verify_file(path: Path) -> tuple[str, list[str]]:
    """Read one artifact by its magic and list its invariant violations."""
    with path.open("rb") as handle:
        magic: bytes = handle.read(4)
    if magic == EMBEDDING_MAGIC:
        if path.with_suffix(".json").exists():
            bank: PrototypeBank = load_bank(path)
            return f"prototype bank (K={bank.num_classes}, d={bank.dim}, {bank.metric})", []
        vectors: np.ndarray = read_vectors(path, mmap=True)
        return f"embeddings (N={vectors.shape[0]}, D={vectors.shape[1]})", []
    if magic == LABEL_MAGIC:
        return f"labels (N={read_labels(path).shape[0]})", []
    if magic == TRANSFORM_MAGIC:
        transform = read_transform(path)
        return f"transform (D={transform.dim}, L={transform.out_dim})", check_transform_invariants(transform)
    if magic == STATS_MAGIC:
        stats: ScatterStats = load_stats(path)
        return f"statistics (D={stats.dim}, K={stats.num_classes}, N={stats.total})", check_stats_invariants(stats)
    error_message: str = f"Unknown artifact magic {magic!r} in {path}."
    raise ValidationError(error_message)


def cmd_verify(args: argparse.Namespace) -> int:
    """Check every artifact's format and invariants."""
    failed: list[Path] = []
    for path in args.paths:
        kind, violations = _verify_file(path)
        status: str = "FAIL" if violations else "OK"
        sys.stdout.write(f"{status} {path}: {kind}\n")
        for violation in violations:
            sys.stdout.write(f"    {violation}\n")
        if violations:
            failed.append(path)
    if failed:
        error_message: str = f"{len(failed)} artifacts violate their invariants."
        raise ValidationError(error_message)
    return EXIT_OK


def cmd_floor(args: argparse.Namespace) -> int:
    """Print the smallest usable shrinkage of a statistics checkpoint."""
    sys.stdout.write(f"{lambda_floor(load_stats(args.stats)):g}\n")
    return EXIT_OK


#
# Parser
#


def _add_fit_options(parser: argparse.ArgumentParser, *, required: bool) -> None:
    parser.add_argument(
        "--lambda",
        dest="shrinkage",
        type=float,
        required=required,
        default=None if required else 150.0,
        help="shrinkage added to the within-class scatter" + ("" if required else " (default: 150)"),
    )
    parser.add_argument("--out-dim", type=_out_dim, default="full", help="output dimension L or 'full' (default)")
    parser.add_argument(
        "--weighting",
        choices=("count", "uniform"),
        default="count",
        help="class weights of the between-class scatter (default: count)",
    )


def _add_protocol_options(parser: argparse.ArgumentParser) -> None:
    for split in ("train", "test"):
        parser.add_argument(f"--{split}-embeddings", type=Path, required=True, help=f"{split} KFEB embeddings")
        parser.add_argument(f"--{split}-labels", type=Path, required=True, help=f"{split} KFLB labels")
        parser.add_argument(f"--{split}-classes", type=Path, help=f"{split} TSV class table")
    parser.add_argument("--text-embeddings", type=Path, help="KFEB text embeddings (zeroshot)")
    parser.add_argument("--text-labels", type=Path, help="KFLB class prompted by each text embedding")
    parser.add_argument("--space", choices=SPACES, default="koofu", help="embedding space (default: koofu)")
    _add_fit_options(parser, required=False)
    parser.add_argument("--transform", type=Path, help="pre-fitted KFTX transform instead of fitting")
    parser.add_argument("--classifier", choices=CLASSIFIERS, default="nvp", help="classifier (default: nvp)")
    parser.add_argument("--metric", choices=METRICS, default="cosine", help="similarity (default: cosine)")
    parser.add_argument("--k", type=_positive_int, default=15, help="neighbors of the k-NN vote (default: 15)")
    parser.add_argument(
        "--top-k",
        type=_positive_int,
        nargs="+",
        default=[1, 5],
        help="reported top-k cut-offs (default: 1 5)",
    )
    parser.add_argument("--mode", choices=PROTOTYPE_MODES, default=PROTOTYPE_MODES[0], help="prototype construction")
    parser.add_argument("--class-set", type=Path, help="class ids the bank or index is restricted to")
    parser.add_argument("--ground-truth", type=Path, help="multi-label ground truth (JSONL) for ReaL metrics")
    parser.add_argument("--repeats", type=_positive_int, default=3, help="timed search repetitions (default: 3)")
    parser.add_argument("--report", type=Path, help="write reports as newline-delimited JSON")


def build_parser() -> argparse.ArgumentParser:
    """Return the argument parser of every subcommand."""
    parser = argparse.ArgumentParser(prog="koofu", description=__doc__, allow_abbrev=False)
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="log debug messages")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="log warnings and errors only")
    parser.add_argument("--threads", type=_positive_int, help="worker threads (default: KOOFU_THREADS or all cores)")
    subparsers = parser.add_subparsers(dest="command", required=True)

    def add(name: str, handler: Callable[[argparse.Namespace], int]) -> argparse.ArgumentParser:
        subparser = subparsers.add_parser(name, help=handler.__doc__, description=handler.__doc__, allow_abbrev=False)
        subparser.set_defaults(handler=handler)
        return subparser

    fit = add("fit", cmd_fit)
    source = fit.add_mutually_exclusive_group(required=True)
    source.add_argument(
        "--shard",
        nargs=2,
        action="append",
        type=Path,
        metavar=("EMBEDDINGS", "LABELS"),
        help="KFEB embeddings and KFLB labels; repeat for more shards",
    )
    source.add_argument("--from-stats", type=Path, help="resume from a KFST statistics checkpoint")
    fit.add_argument("--classes", type=Path, help="TSV class table of the shards")
    _add_fit_options(fit, required=True)
    fit.add_argument("--stats-out", type=Path, help="also write the accumulated KFST statistics")
    fit.add_argument("-o", "--output", type=Path, required=True, help="KFTX transform to write")

    apply_parser = add("apply", cmd_apply)
    apply_parser.add_argument("--transform", type=Path, required=True, help="KFTX transform")
    apply_parser.add_argument("-i", "--input", type=Path, required=True, help="KFEB embeddings to map")
    apply_parser.add_argument("-o", "--output", type=Path, required=True, help="KFEB file to write")
    apply_parser.add_argument("--renormalize", action="store_true", help="scale output rows to unit norm")

    prototypes = add("prototypes", cmd_prototypes)
    prototypes.add_argument("--embeddings", type=Path, help="KFEB training embeddings (visual bank)")
    prototypes.add_argument("--labels", type=Path, help="KFLB training labels (visual bank)")
    prototypes.add_argument("--classes", type=Path, help="TSV class table (visual bank)")
    prototypes.add_argument("--text", type=Path, help="KFEB text embeddings (textual bank)")
    prototypes.add_argument("--text-labels", type=Path, help="KFLB class prompted by each text embedding")
    prototypes.add_argument("--transform", type=Path, help="KFTX transform to build the bank behind")
    prototypes.add_argument("--metric", choices=METRICS, default="cosine", help="similarity (default: cosine)")
    prototypes.add_argument("--mode", choices=PROTOTYPE_MODES, default=PROTOTYPE_MODES[0], help="construction")
    prototypes.add_argument("-o", "--output", type=Path, required=True, help="KFEB bank file to write")

    classify = add("classify", cmd_classify)
    classify.add_argument("--queries", type=Path, required=True, help="KFEB query embeddings")
    target = classify.add_mutually_exclusive_group(required=True)
    target.add_argument("--bank", type=Path, help="prototype bank (nearest prototype)")
    target.add_argument("--index-embeddings", type=Path, help="KFEB indexed embeddings (k-NN)")
    classify.add_argument("--index-labels", type=Path, help="KFLB labels of the indexed embeddings")
    classify.add_argument("--index-classes", type=Path, help="TSV class table of the indexed embeddings")
    classify.add_argument("--transform", type=Path, help="KFTX transform applied to queries (and the index)")
    classify.add_argument("--metric", choices=METRICS, default="cosine", help="k-NN similarity (default: cosine)")
    classify.add_argument("--top-k", type=_positive_int, default=1, help="ranked classes per query (default: 1)")
    classify.add_argument("--k", type=_positive_int, default=15, help="neighbors of the k-NN vote (default: 15)")
    classify.add_argument("-o", "--output", type=Path, help="write predictions here instead of stdout")

    evaluate = add("eval", cmd_eval)
    _add_protocol_options(evaluate)

    sweep_parser = add("sweep", cmd_sweep)
    _add_protocol_options(sweep_parser)
    sweep_parser.add_argument("--axis", choices=SWEEP_AXES, required=True, help="swept parameter")
    sweep_parser.add_argument("--values", nargs="+", required=True, help="values of the swept parameter")
    sweep_parser.add_argument("--parallel", action="store_true", help="run points concurrently")

    synth = add("synth", cmd_synth)
    synth.add_argument("--num-classes", type=_positive_int, default=20, help="classes K (default: 20)")
    synth.add_argument("--dim", type=_positive_int, default=64, help="dimension D (default: 64)")
    synth.add_argument("--per-class", type=_positive_int, default=200, help="training samples per class")
    synth.add_argument("--test-per-class", type=_positive_int, default=50, help="held-out samples per class")
    synth.add_argument("--condition", type=float, default=100.0, help="covariance condition number (default: 100)")
    synth.add_argument("--separation", type=float, default=1.75, help="class mean spread (default: 1.75)")
    synth.add_argument("--seed", type=_seed, default=DEFAULT_SEED, help=f"random seed (default: {DEFAULT_SEED})")
    synth.add_argument("-o", "--output-dir", type=Path, required=True, help="directory of the written files")

    verify = add("verify", cmd_verify)
    verify.add_argument("paths", type=Path, nargs="+", help="artifacts to check")

    floor = add("floor", cmd_floor)
    floor.add_argument("stats", type=Path, help="KFST statistics checkpoint")
    return parser


def _check_args(args: argparse.Namespace) -> None:
    """Reject flag combinations argparse cannot express."""
    if args.command == "prototypes":
        visual: bool = args.embeddings is not None
        if visual == (args.text is not None):
            error_message: str = "Pass either --embeddings/--labels/--classes or --text/--text-labels."
            raise ValidationError(error_message)
        if visual and (args.labels is None or args.classes is None):
            error_message = "--embeddings needs --labels and --classes."
            raise ValidationError(error_message)
        if not visual and args.text_labels is None:
            error_message = "--text needs --text-labels."
            raise ValidationError(error_message)
    if args.command == "classify" and args.index_embeddings is not None and args.index_labels is None:
        error_message = "--index-embeddings needs --index-labels."
        raise ValidationError(error_message)
    if args.command == "classify" and args.index_embeddings is not None and args.index_classes is None:
        error_message = "--index-embeddings needs --index-classes."
        raise ValidationError(error_message)
    if args.command in {"eval", "sweep"} and (args.text_embeddings is None) != (args.text_labels is None):
        error_message = "--text-embeddings and --text-labels go together."
        raise ValidationError(error_message)


def configure_logging(*, verbose: bool = False, quiet: bool = False) -> None:
    """Send koofu logs to stderr at the requested level."""
    level: int = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def main(argv: Sequence[str] | None = None) -> int:
    """Run the command line.

    Parameters
    ----------
    argv : Sequence[str], optional
        Arguments without the program name (default is ``sys.argv[1:]``).

    Returns
    -------
    int
        Process exit code.
    """
    parser: argparse.ArgumentParser = build_parser()
    try:
        args: argparse.Namespace = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    configure_logging(verbose=args.verbose, quiet=args.quiet)

    try:
        args.threads = resolve_threads(args.threads)
        _check_args(args)
        log_parameters(
            logger,
            {key: value for key, value in vars(args).items() if key != "handler"},
            title=f"koofu {args.command}",
        )
        return args.handler(args)
    except Exception as e:
        code: int = exit_code_for(e)
        if code == 1:
            logger.exception("Unexpected failure")
        else:
            logger.error("%s", e)
        return code


if __name__ == "__main__":
    sys.exit(main())
