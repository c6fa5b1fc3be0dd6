"""Command-line interface for nibblescan."""

from __future__ import annotations

import argparse
import functools
import logging
import sys
import time
from collections.abc import Callable, Sequence
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from nibblescan._types import GroundTruth, VectorSet
from nibblescan.bench import DEFAULT_TRIALS, METHODS, evaluate, write_csv
from nibblescan.dataset import (
    SYNTHETIC_KINDS,
    gen_dataset,
    gen_vectors,
    ground_truth,
    make_rng,
    read_fvecs,
    read_ivecs,
    write_fvecs,
    write_ivecs,
)
from nibblescan.errors import (
    ArgumentError,
    CorruptionError,
    EvaluationError,
    FormatError,
    NibblescanError,
    PropertyError,
    UsageError,
)
from nibblescan.fastscan import FASTSCAN_K
from nibblescan.ivf import load, save, train_ivf
from nibblescan.kernels import BACKEND_ENV_VAR, available_backends
from nibblescan.params import IndexParams, SyntheticSpec
from nibblescan.pq import bits_per_code
from nibblescan.selftest import DEFAULT_CASES, run_selftest

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PROPERTY = 3


class CliParser(argparse.ArgumentParser):
    """Argument parser that reports bad flags as :class:`UsageError`."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


def cli_error_handler(func: Callable[[argparse.Namespace], int]):
    """Wrap a CLI command with standard error handling and exit codes."""

    @functools.wraps(func)
    def wrapper(args: argparse.Namespace) -> int:
        try:
            return func(args)
        except (UsageError, ArgumentError) as e:
            logger.debug("Usage failure", exc_info=True)
            print(f"Usage error: {e}", file=sys.stderr)
            return EXIT_USAGE
        except ValidationError as e:
            print(f"Invalid parameters: {e}", file=sys.stderr)
            return EXIT_USAGE
        except FormatError as e:
            logger.debug("Format failure", exc_info=True)
            print(f"Format error: {e}", file=sys.stderr)
            return EXIT_DATA
        except CorruptionError as e:
            print(f"Corruption error: {e}", file=sys.stderr)
            return EXIT_DATA
        except EvaluationError as e:
            print(f"Evaluation error: {e}", file=sys.stderr)
            return EXIT_DATA
        except PropertyError as e:
            print(f"Selftest failed: {e}", file=sys.stderr)
            return EXIT_PROPERTY
        except FileNotFoundError as e:
            print(f"File not found: {e}", file=sys.stderr)
            return EXIT_DATA
        except NibblescanError as e:
            print(f"Error: {e}", file=sys.stderr)
            return EXIT_DATA

    return wrapper


def _int_list(value: str, flag: str) -> list[int]:
    try:
        items = [int(part) for part in value.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"{flag} expects comma-separated integers, got {value!r}") from None
    if not items:
        raise UsageError(f"{flag} needs at least one value")
    return items


def _synthetic(value: str, seed: int) -> SyntheticSpec:
    try:
        return SyntheticSpec.model_validate(value).with_seed(seed)
    except ValidationError as e:
        raise UsageError(f"--synthetic: {e.errors()[0]['msg']}") from None


def _dump_path(base: str, row: int) -> Path:
    path = Path(base)
    return path.with_name(f"{path.stem}.{row}{path.suffix or '.ivecs'}")


@cli_error_handler
def cmd_gen(args: argparse.Namespace) -> int:
    """Write a synthetic base set, queries and exact ground truth as vecs files."""
    spec = _synthetic(args.synthetic, args.seed)
    if args.queries < 0:
        raise UsageError(f"--queries must be >= 0, got {args.queries}")
    base, queries = gen_dataset(
        spec.n, args.queries, spec.d, spec.n_clusters, spec.seed, kind=args.kind
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_fvecs(out / "base.fvecs", base)
    write_fvecs(out / "query.fvecs", queries)
    gt_k = min(args.gt_k, base.n)
    write_ivecs(out / "groundtruth.ivecs", ground_truth(base, queries, gt_k).ids)

    print(f"Wrote {base.n} base and {queries.n} query vectors (d={base.d}) to {out}")
    print(f"Ground truth: {gt_k} neighbors per query")
    return EXIT_OK


def _load_base(args: argparse.Namespace) -> VectorSet:
    if args.synthetic:
        spec = _synthetic(args.synthetic, args.seed)
        return gen_vectors(spec.n, spec.d, spec.n_clusters, spec.seed, kind=args.kind)
    base = read_fvecs(args.data)
    if base.n == 0:
        raise FormatError("dataset holds no vectors", path=str(args.data))
    return base


@cli_error_handler
def cmd_train(args: argparse.Namespace) -> int:
    """Train an inverted index, add the base set and write the container."""
    base = _load_base(args)
    training = read_fvecs(args.train) if args.train else base
    if args.train_size is not None:
        if args.train_size < 1:
            raise UsageError(f"--train-size must be >= 1, got {args.train_size}")
        if args.train_size < training.n:
            rows = make_rng(args.seed).choice(training.n, size=args.train_size, replace=False)
            training = training.subset(np.sort(rows))

    nlist = args.nlist
    if nlist is None:
        nlist = IndexParams.sqrt_heuristic(base.n, args.m, args.seed).nlist
        logger.info("Using nlist=%d (round(sqrt(%d)))", nlist, base.n)

    start = time.perf_counter()
    index = train_ivf(training, nlist, args.m, args.seed, args.iters)
    index.add(base, base_id=0)
    elapsed = time.perf_counter() - start
    save(index, args.out)

    sizes = index.list_sizes()
    print(
        f"Trained index: d={index.d} nlist={index.nlist} m={index.m} k={FASTSCAN_K} "
        f"ntotal={index.ntotal} bits/code={bits_per_code(index.m, FASTSCAN_K)}"
    )
    print(f"List sizes: min={min(sizes)} max={max(sizes)} empty={sizes.count(0)}")
    print(f"Training time: {elapsed:.2f}s")
    print(f"Wrote {args.out}")
    return EXIT_OK


@cli_error_handler
def cmd_search(args: argparse.Namespace) -> int:
    """Benchmark one method and print a CSV table on stdout."""
    nprobes = _int_list(args.nprobe, "--nprobe")
    if args.topk < 1:
        raise UsageError(f"--topk must be >= 1, got {args.topk}")

    index = load(args.index)
    queries = read_fvecs(args.queries)
    gt = GroundTruth.from_matrix(read_ivecs(args.gt)) if args.gt else None

    rows = evaluate(
        index,
        queries,
        gt,
        args.method,
        nprobes=nprobes,
        topk=args.topk,
        trials=args.trials,
        backend=args.backend,
    )
    write_csv([result for result, _ in rows], sys.stdout)

    if args.dump_ids:
        for i, (_, ids) in enumerate(rows):
            write_ivecs(_dump_path(args.dump_ids, i), ids)
    return EXIT_OK


@cli_error_handler
def cmd_selftest(args: argparse.Namespace) -> int:
    """Run the kernel, packing and error-bound property suites."""
    compare = None
    if args.compare:
        names = [part.strip() for part in args.compare.split(",")]
        if len(names) != 2 or not all(names):
            raise UsageError(f"--compare expects two backends A,B, got {args.compare!r}")
        compare = (names[0], names[1])

    report = run_selftest(
        cases=args.cases,
        seed=args.seed,
        compare=compare,
        inject_corruption=args.inject_corruption,
    )
    for line in report.lines():
        print(line)
    report.raise_for_failure()
    print(f"All {len(report.suites)} suites passed")
    return EXIT_OK


def build_parser() -> CliParser:
    from nibblescan import __version__

    parser = CliParser(
        description="nibblescan - 4-bit product quantization fast scan", prog="nibblescan"
    )
    parser.add_argument(
        "--verbose",
        "-v",
        action="store_true",
        help="Enable debug logging and full error tracebacks",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"%(prog)s {__version__}",
    )

    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    # nibblescan gen
    parser_gen = subparsers.add_parser("gen", help="Write a synthetic dataset")
    parser_gen.add_argument("--synthetic", required=True, help="n,d,clusters")
    parser_gen.add_argument("--queries", type=int, default=1000, help="Number of queries")
    parser_gen.add_argument("--seed", type=int, default=0)
    parser_gen.add_argument("--kind", choices=SYNTHETIC_KINDS, default="mixture")
    parser_gen.add_argument("--gt-k", type=int, default=100, help="Ground-truth depth")
    parser_gen.add_argument("--out", required=True, help="Output directory")
    parser_gen.set_defaults(func=cmd_gen)

    # nibblescan train
    parser_train = subparsers.add_parser("train", help="Train and build an index")
    source = parser_train.add_mutually_exclusive_group(required=True)
    source.add_argument("--data", help="Base vectors (.fvecs)")
    source.add_argument("--synthetic", help="Generate the base set: n,d,clusters")
    parser_train.add_argument(
        "--kind", choices=SYNTHETIC_KINDS, default="mixture", help="Generator for --synthetic"
    )
    parser_train.add_argument("--train", help="Separate training vectors (.fvecs)")
    parser_train.add_argument("--train-size", type=int, help="Seeded training subsample size")
    parser_train.add_argument("--m", type=int, required=True, help="Subquantizers")
    parser_train.add_argument("--nlist", type=int, help="Inverted lists (default round(sqrt(N)))")
    parser_train.add_argument("--iters", type=int, default=25, help="k-means iterations")
    parser_train.add_argument("--seed", type=int, default=0)
    parser_train.add_argument("--out", required=True, help="Index file to write")
    parser_train.set_defaults(func=cmd_train)

    # nibblescan search
    parser_search = subparsers.add_parser("search", help="Benchmark a search method")
    parser_search.add_argument("--index", required=True, help="Index file")
    parser_search.add_argument("--queries", required=True, help="Query vectors (.fvecs)")
    parser_search.add_argument("--gt", help="Ground truth (.ivecs)")
    parser_search.add_argument("--method", choices=METHODS, default="ivf-fastscan")
    parser_search.add_argument("--nprobe", default="1", help="Comma-separated nprobe sweep")
    parser_search.add_argument("--topk", type=int, default=10)
    parser_search.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    parser_search.add_argument(
        "--backend",
        choices=[*available_backends(), "auto"],
        help=f"Kernel backend (default: ${BACKEND_ENV_VAR} or auto)",
    )
    parser_search.add_argument("--dump-ids", help="Write result ids per row as .ivecs")
    parser_search.set_defaults(func=cmd_search)

    # nibblescan selftest
    parser_selftest = subparsers.add_parser("selftest", help="Run property suites")
    parser_selftest.add_argument("--cases", type=int, default=DEFAULT_CASES)
    parser_selftest.add_argument("--seed", type=int, default=0)
    parser_selftest.add_argument("--compare", help="Backend pair A,B (reference first)")
    parser_selftest.add_argument(
        "--inject-corruption", action="store_true", help=argparse.SUPPRESS
    )
    parser_selftest.set_defaults(func=cmd_selftest)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Main CLI entry point."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"Usage error: {e}", file=sys.stderr)
        return EXIT_USAGE

    if args.verbose:
        logging.basicConfig(level=logging.DEBUG, format="%(levelname)s %(name)s: %(message)s")

    if not args.command:
        parser.print_help()
        return EXIT_OK

    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
