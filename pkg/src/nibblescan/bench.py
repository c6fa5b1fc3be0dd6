"""Timed recall/latency evaluation of the three search methods."""

from __future__ import annotations

import csv
import logging
import threading
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Literal, TextIO

import numpy as np
from threadpoolctl import threadpool_limits

from nibblescan._types import GroundTruth, SearchResult, VectorSet
from nibblescan.dataset import recall_at_1
from nibblescan.errors import ArgumentError, EvaluationError
from nibblescan.fastscan import FASTSCAN_K, fastscan_search, pack_codes, quantize_lut
from nibblescan.ivf import IVFIndex
from nibblescan.kernels import resolve_backend_name
from nibblescan.params import SearchParams
from nibblescan.pq import adc_scan, build_lut

logger = logging.getLogger(__name__)

Method = Literal["pq-adc", "fastscan", "ivf-fastscan"]
METHODS: tuple[Method, ...] = ("pq-adc", "fastscan", "ivf-fastscan")
CSV_HEADER = [
    "method",
    "m",
    "k",
    "nlist",
    "nprobe",
    "recall_at_1",
    "ms_per_query",
    "qps",
    "backend",
]
DEFAULT_TRIALS = 5
TIMED_THREADS = 1
NO_BACKEND = "n/a"

SearchFn = Callable[[np.ndarray], SearchResult]


@dataclass
class BenchResult:
    """One CSV row: configuration, accuracy and speed of a method."""

    method: Method
    m: int
    k: int
    nlist: int
    nprobe: int
    recall_at_1: float
    queries_per_second: float
    ms_per_query: float
    backend: str
    threads_stable: bool = True

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ArgumentError(f"unknown method {self.method!r}", "method")
        if not 0.0 <= self.recall_at_1 <= 1.0:
            raise ArgumentError(f"recall must be in [0, 1], got {self.recall_at_1}", "recall")

    @classmethod
    def from_timing(
        cls,
        *,
        method: Method,
        m: int,
        k: int,
        nlist: int,
        nprobe: int,
        recall: float,
        seconds_per_query: float,
        backend: str,
        threads_stable: bool = True,
    ) -> BenchResult:
        # Guard against a zero reading from a coarse clock.
        seconds_per_query = max(seconds_per_query, 1e-9)
        return cls(
            method=method,
            m=m,
            k=k,
            nlist=nlist,
            nprobe=nprobe,
            recall_at_1=recall,
            queries_per_second=1.0 / seconds_per_query,
            ms_per_query=1000.0 * seconds_per_query,
            backend=backend,
            threads_stable=threads_stable,
        )

    def to_row(self) -> list[str]:
        return [
            self.method,
            str(self.m),
            str(self.k),
            str(self.nlist),
            str(self.nprobe),
            f"{self.recall_at_1:.4f}",
            f"{self.ms_per_query:.4f}",
            f"{self.queries_per_second:.1f}",
            self.backend,
        ]


@dataclass
class TimedRun:
    """Mean per-query time over the measured trials plus the last trial's ids."""

    seconds_per_query: float
    ids: np.ndarray
    threads_stable: bool


def make_searcher(
    index: IVFIndex,
    method: Method,
    topk: int,
    nprobe: int = 1,
    backend: str | None = None,
) -> SearchFn:
    """Per-query search closure; setup that does not depend on the query happens here."""
    if method == "ivf-fastscan":
        params = SearchParams(nprobe=nprobe, topk=topk)
        return lambda q: index.search(q, params, backend=backend)

    ids_by_pos, codes = index.flat_codes()
    cb = index.codebook
    if method == "pq-adc":

        def adc(q: np.ndarray) -> SearchResult:
            hit = adc_scan(build_lut(cb, q), codes, topk)
            return SearchResult(ids_by_pos[hit.ids], hit.distances)

        return adc

    if method == "fastscan":
        packed = pack_codes(codes)

        def fast(q: np.ndarray) -> SearchResult:
            hit = fastscan_search(quantize_lut(build_lut(cb, q)), packed, topk, backend=backend)
            return SearchResult(ids_by_pos[hit.ids], hit.distances)

        return fast

    raise ArgumentError(f"unknown method {method!r}; choose from {', '.join(METHODS)}", "method")


def run_queries(search: SearchFn, queries: VectorSet, topk: int) -> np.ndarray:
    """Result ids ``(nq, topk)``, padded with -1 when a query returns fewer hits."""
    ids = np.full((queries.n, topk), -1, dtype=np.int64)
    for i in range(queries.n):
        hit = search(queries.row(i))
        ids[i, : len(hit)] = hit.ids
    return ids


def time_trials(
    search: SearchFn, queries: VectorSet, topk: int, trials: int = DEFAULT_TRIALS
) -> TimedRun:
    """One discarded warm-up pass, then ``trials`` timed single-threaded passes.

    BLAS and OpenMP pools are held at one thread for the whole run.
    """
    if trials < 1:
        raise ArgumentError(f"trials must be >= 1, got {trials}", "trials")
    with threadpool_limits(limits=TIMED_THREADS):
        ids = run_queries(search, queries, topk)
        threads_before = threading.active_count()
        elapsed: list[float] = []
        for _ in range(trials):
            start = time.perf_counter()
            ids = run_queries(search, queries, topk)
            elapsed.append(time.perf_counter() - start)
        threads_stable = threading.active_count() == threads_before
    if not threads_stable:
        logger.warning("Thread count changed during a timed section")
    mean = float(np.mean(elapsed)) / max(queries.n, 1)
    return TimedRun(seconds_per_query=mean, ids=ids, threads_stable=threads_stable)


def check_ground_truth(gt: GroundTruth | None, queries: VectorSet, ntotal: int) -> GroundTruth:
    if gt is None:
        raise EvaluationError("ground truth is required to compute recall")
    if gt.nq < queries.n:
        raise EvaluationError(f"ground truth covers {gt.nq} queries, {queries.n} given")
    if gt.k < 1 and queries.n:
        raise EvaluationError("ground truth rows are empty")
    if gt.ids.size and int(gt.ids.max()) >= ntotal:
        raise EvaluationError(
            f"ground truth references id {int(gt.ids.max())} but the index holds {ntotal}"
        )
    return GroundTruth(gt.ids[: queries.n])


def evaluate(
    index: IVFIndex,
    queries: VectorSet,
    gt: GroundTruth | None,
    method: Method,
    nprobes: Sequence[int] = (1,),
    topk: int = 10,
    trials: int = DEFAULT_TRIALS,
    backend: str | None = None,
) -> list[tuple[BenchResult, np.ndarray]]:
    """Benchmark one method; ``ivf-fastscan`` yields one row per ``nprobe``.

    Zero queries yield no rows.
    """
    if method not in METHODS:
        raise ArgumentError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    truth = check_ground_truth(gt, queries, index.ntotal)
    if queries.n == 0:
        return []
    if queries.d != index.d:
        raise ArgumentError(f"queries have d={queries.d}, index has d={index.d}", "queries")

    backend_name = resolve_backend_name(backend)
    sweep = list(nprobes) if method == "ivf-fastscan" else [1]
    rows: list[tuple[BenchResult, np.ndarray]] = []
    for nprobe in sweep:
        search = make_searcher(index, method, topk, nprobe=nprobe, backend=backend_name)
        timed = time_trials(search, queries, topk, trials)
        result = BenchResult.from_timing(
            method=method,
            m=index.m,
            k=FASTSCAN_K,
            nlist=index.nlist if method == "ivf-fastscan" else 1,
            nprobe=nprobe,
            recall=recall_at_1(timed.ids, truth),
            seconds_per_query=timed.seconds_per_query,
            backend=backend_name if method != "pq-adc" else NO_BACKEND,
            threads_stable=timed.threads_stable,
        )
        logger.debug("%s nprobe=%d: %s", method, nprobe, result)
        rows.append((result, timed.ids))
    return rows


def write_csv(results: Sequence[BenchResult], stream: TextIO) -> None:
    """CSV with header; rows in the given order."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for result in results:
        writer.writerow(result.to_row())
