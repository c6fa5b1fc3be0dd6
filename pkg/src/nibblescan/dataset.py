"""Vector file formats, synthetic datasets and exact ground truth.

The texmex ``.fvecs`` / ``.ivecs`` / ``.bvecs`` formats repeat, per vector,
a little-endian int32 dimension followed by that many float32 / int32 / uint8
components.
"""

from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Literal

import numpy as np

from nibblescan._types import GroundTruth, VectorSet
from nibblescan.errors import ArgumentError, FormatError
from nibblescan.params import MAX_SEED
from nibblescan.topk import select_topk

logger = logging.getLogger(__name__)

SYNTHETIC_SIGMA = 0.05
LATENT_DIM = 8
LATENT_SIGMA = 0.1
LATENT_NOISE = 0.01

SyntheticKind = Literal["mixture", "latent"]
SYNTHETIC_KINDS: tuple[SyntheticKind, ...] = ("mixture", "latent")

_FLOAT = np.dtype("<f4")
_INT = np.dtype("<i4")
_BYTE = np.dtype("u1")

# Rows of queries x base distances held in memory at once by ground_truth().
_GT_BLOCK_ELEMENTS = 1 << 24


def make_rng(seed: int) -> np.random.Generator:
    """Philox4x64-10 keyed directly by a 64-bit seed."""
    if not 0 <= seed <= MAX_SEED:
        raise ArgumentError(f"seed must be in [0, 2**64), got {seed}", "seed")
    return np.random.Generator(np.random.Philox(key=seed))


# --- Reading ---


def _parse_records(buf: bytes, payload: np.dtype, path: str) -> np.ndarray:
    """Split a vecs byte string into an ``(n, d)`` array of ``payload`` items."""
    total = len(buf)
    if total == 0:
        return np.zeros((0, 0), dtype=payload)
    if total < 4:
        raise FormatError("truncated dimension header", offset=0, path=path)

    d = int(np.frombuffer(buf, dtype=_INT, count=1)[0])
    if d <= 0:
        raise FormatError(f"non-positive dimension {d}", offset=0, path=path)

    record = 4 + d * payload.itemsize
    n_full, remainder = divmod(total, record)
    if remainder == 0:
        dims = np.ndarray((n_full,), dtype=_INT, buffer=buf, offset=0, strides=(record,))
        bad = np.flatnonzero(dims != d)
        if bad.size == 0:
            rows = np.frombuffer(buf, dtype=_BYTE).reshape(n_full, record)[:, 4:]
            return rows.copy().view(payload).reshape(n_full, d)

    # Slow path: walk records one by one to report the first defect precisely.
    offset = 0
    while offset < total:
        if offset + 4 > total:
            raise FormatError("truncated dimension header", offset=offset, path=path)
        rec_d = int(np.frombuffer(buf, dtype=_INT, count=1, offset=offset)[0])
        if rec_d != d:
            raise FormatError(
                f"inconsistent dimension {rec_d} (expected {d})", offset=offset, path=path
            )
        if offset + record > total:
            raise FormatError("truncated record", offset=offset, path=path)
        offset += record
    raise FormatError("inconsistent record dimensions", path=path)


def _read(path: str | os.PathLike[str], payload: np.dtype) -> np.ndarray:
    path = Path(path)
    buf = path.read_bytes()
    logger.debug("Reading %s (%d bytes)", path, len(buf))
    return _parse_records(buf, payload, str(path))


def read_fvecs(path: str | os.PathLike[str]) -> VectorSet:
    """Read an ``.fvecs`` file. An empty file yields ``n = d = 0``."""
    rows = _read(path, _FLOAT)
    if not np.isfinite(rows).all():
        bad = int(np.flatnonzero(~np.isfinite(rows).all(axis=1))[0])
        record = 4 + rows.shape[1] * 4
        raise FormatError("non-finite component", offset=bad * record, path=str(path))
    return VectorSet(rows.astype(np.float32, copy=False))


def read_ivecs(path: str | os.PathLike[str]) -> np.ndarray:
    """Read an ``.ivecs`` file into an ``(n, d)`` int32 matrix."""
    return _read(path, _INT).astype(np.int32, copy=False)


def read_bvecs(path: str | os.PathLike[str]) -> VectorSet:
    """Read a ``.bvecs`` file, widening bytes to float32."""
    return VectorSet(_read(path, _BYTE).astype(np.float32))


# --- Writing ---


def _write(path: str | os.PathLike[str], rows: np.ndarray, payload: np.dtype) -> None:
    n, d = rows.shape
    if n == 0:
        Path(path).write_bytes(b"")
        return
    if d == 0:
        raise ArgumentError("cannot write zero-dimensional vectors", "d")
    record = np.empty((n, 4 + d * payload.itemsize), dtype=_BYTE)
    record[:, :4] = np.frombuffer(np.int32(d).astype(_INT).tobytes(), dtype=_BYTE)
    record[:, 4:] = np.ascontiguousarray(rows, dtype=payload).view(_BYTE).reshape(n, -1)
    Path(path).write_bytes(record.tobytes())
    logger.debug("Wrote %d vectors of dimension %d to %s", n, d, path)


def write_fvecs(path: str | os.PathLike[str], vectors: VectorSet) -> None:
    _write(path, vectors.data, _FLOAT)


def write_ivecs(path: str | os.PathLike[str], matrix: np.ndarray) -> None:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ArgumentError(f"expected a 2-D matrix, got shape {matrix.shape}", "matrix")
    info = np.iinfo(np.int32)
    if matrix.size and (matrix.min() < info.min or matrix.max() > info.max):
        raise ArgumentError("values do not fit in int32", "matrix")
    _write(path, matrix, _INT)


def write_bvecs(path: str | os.PathLike[str], vectors: VectorSet) -> None:
    data = vectors.data
    if data.size and (
        data.min() < 0 or data.max() > 255 or not np.array_equal(data, np.rint(data))
    ):
        raise ArgumentError("bvecs components must be integers in [0, 255]", "vectors")
    _write(path, data, _BYTE)


# --- Synthetic data ---


def _check_counts(n: int, d: int, n_clusters: int) -> None:
    if n < 1:
        raise ArgumentError(f"n must be >= 1, got {n}", "n")
    if d < 1:
        raise ArgumentError(f"d must be >= 1, got {d}", "d")
    if not 1 <= n_clusters <= n:
        raise ArgumentError(f"n_clusters must be in [1, {n}], got {n_clusters}", "n_clusters")


def gen_synthetic_labeled(
    n: int, d: int, n_clusters: int, seed: int
) -> tuple[VectorSet, np.ndarray]:
    """Gaussian mixture with its cluster labels.

    Centres are uniform in ``[0, 1)^d``; each point is its centre plus
    isotropic noise with ``sigma = 0.05``.
    """
    _check_counts(n, d, n_clusters)
    rng = make_rng(seed)
    centers = rng.random((n_clusters, d))
    labels = rng.integers(0, n_clusters, size=n)
    noise = rng.standard_normal((n, d)) * SYNTHETIC_SIGMA
    points = (centers[labels] + noise).astype(np.float32)
    return VectorSet(points), labels


def gen_synthetic(n: int, d: int, n_clusters: int, seed: int) -> VectorSet:
    """Deterministic synthetic dataset; identical output for identical arguments."""
    return gen_synthetic_labeled(n, d, n_clusters, seed)[0]


def gen_latent_labeled(
    n: int, d: int, n_clusters: int, seed: int, latent_dim: int = LATENT_DIM
) -> tuple[VectorSet, np.ndarray]:
    """Gaussian mixture in a low-dimensional space, embedded linearly in ``d`` dimensions.

    Centres are uniform in ``[0, 1)^l`` with ``l = min(latent_dim, d)`` and points
    spread around them with ``sigma = 0.1``. A random ``(l, d)`` Gaussian map with
    entries of variance ``1 / l`` embeds them, and isotropic noise with
    ``sigma = 0.01`` makes the data full rank.
    """
    _check_counts(n, d, n_clusters)
    if latent_dim < 1:
        raise ArgumentError(f"latent_dim must be >= 1, got {latent_dim}", "latent_dim")
    latent = min(latent_dim, d)
    rng = make_rng(seed)
    centers = rng.random((n_clusters, latent))
    labels = rng.integers(0, n_clusters, size=n)
    z = centers[labels] + rng.standard_normal((n, latent)) * LATENT_SIGMA
    embedding = rng.standard_normal((latent, d)) / np.sqrt(latent)
    noise = rng.standard_normal((n, d)) * LATENT_NOISE
    return VectorSet((z @ embedding + noise).astype(np.float32)), labels


def gen_latent(n: int, d: int, n_clusters: int, seed: int) -> VectorSet:
    return gen_latent_labeled(n, d, n_clusters, seed)[0]


def gen_vectors(
    n: int, d: int, n_clusters: int, seed: int, kind: SyntheticKind = "mixture"
) -> VectorSet:
    """Synthetic vectors of the given kind."""
    if kind == "mixture":
        return gen_synthetic(n, d, n_clusters, seed)
    if kind == "latent":
        return gen_latent(n, d, n_clusters, seed)
    choices = ", ".join(SYNTHETIC_KINDS)
    raise ArgumentError(f"unknown synthetic kind {kind!r}; choose from {choices}", "kind")


def gen_dataset(
    n_base: int,
    n_query: int,
    d: int,
    n_clusters: int,
    seed: int,
    kind: SyntheticKind = "mixture",
) -> tuple[VectorSet, VectorSet]:
    """Base and query sets drawn from one distribution; queries are the trailing rows."""
    if n_query < 0:
        raise ArgumentError(f"n_query must be >= 0, got {n_query}", "n_query")
    everything = gen_vectors(n_base + n_query, d, n_clusters, seed, kind)
    return (
        VectorSet(everything.data[:n_base]),
        VectorSet(everything.data[n_base:]),
    )


# --- Ground truth ---


def exact_sq_distances(queries: np.ndarray, base: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances in float64, ``(nq, n)``."""
    q = queries.astype(np.float64)
    x = base.astype(np.float64)
    dist = (q * q).sum(axis=1)[:, None] - 2.0 * (q @ x.T) + (x * x).sum(axis=1)[None, :]
    np.maximum(dist, 0.0, out=dist)
    return dist


def ground_truth(base: VectorSet, queries: VectorSet, k: int) -> GroundTruth:
    """Exact ``k`` nearest neighbors of every query by linear scan."""
    if queries.n and base.d != queries.d:
        raise ArgumentError(
            f"dimension mismatch: base d={base.d}, queries d={queries.d}", "queries"
        )
    if not 1 <= k <= base.n:
        raise ArgumentError(f"k must be in [1, {base.n}], got {k}", "k")

    ids = np.empty((queries.n, k), dtype=np.int64)
    block = max(1, _GT_BLOCK_ELEMENTS // max(base.n, 1))
    for start in range(0, queries.n, block):
        stop = min(start + block, queries.n)
        dist = exact_sq_distances(queries.data[start:stop], base.data)
        for row in range(stop - start):
            ids[start + row] = select_topk(dist[row], k).ids
    logger.debug("Computed ground truth for %d queries (k=%d)", queries.n, k)
    return GroundTruth(ids)


def recall_at(result_ids: np.ndarray, gt: GroundTruth, r: int = 1) -> float:
    """Fraction of queries whose true nearest neighbor is within the first ``r`` results."""
    result_ids = np.asarray(result_ids)
    if result_ids.shape[0] != gt.nq:
        raise ArgumentError(
            f"{result_ids.shape[0]} result rows for {gt.nq} ground-truth rows", "result_ids"
        )
    if gt.nq == 0:
        return 0.0
    top = result_ids[:, :r]
    hits = (top == gt.ids[:, :1]).any(axis=1)
    return float(hits.mean())


def recall_at_1(result_ids: np.ndarray, gt: GroundTruth) -> float:
    return recall_at(result_ids, gt, 1)
