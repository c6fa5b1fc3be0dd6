"""Product quantization: training, encoding, float ADC tables and the baseline scan."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from nibblescan._types import LUTf, PQCodes, SearchResult, VectorSet
from nibblescan.errors import ArgumentError, CorruptionError
from nibblescan.kmeans import assign_batch, kmeans
from nibblescan.params import MAX_SEED, KMeansParams
from nibblescan.topk import select_topk

logger = logging.getLogger(__name__)

MAX_K = 256


@dataclass(frozen=True, eq=False)
class Codebook:
    """``m`` sub-codebooks of ``k`` centroids, each ``dsub`` wide.

    ``centroids`` has shape ``(m, k, dsub)``.
    """

    centroids: np.ndarray

    def __post_init__(self) -> None:
        centroids = np.ascontiguousarray(self.centroids, dtype=np.float32)
        if centroids.ndim != 3:
            raise ArgumentError(
                f"expected an (m, k, dsub) array, got shape {centroids.shape}", "centroids"
            )
        m, k, dsub = centroids.shape
        if m < 1 or dsub < 1 or not 1 <= k <= MAX_K:
            raise ArgumentError(f"invalid codebook shape {centroids.shape}", "centroids")
        centroids = centroids.view()
        centroids.setflags(write=False)
        object.__setattr__(self, "centroids", centroids)

    @property
    def m(self) -> int:
        return int(self.centroids.shape[0])

    @property
    def k(self) -> int:
        return int(self.centroids.shape[1])

    @property
    def dsub(self) -> int:
        return int(self.centroids.shape[2])

    @property
    def d(self) -> int:
        return self.m * self.dsub

    def sub_codebook(self, j: int) -> VectorSet:
        return VectorSet(self.centroids[j])

    def equals(self, other: Codebook) -> bool:
        return (
            self.centroids.shape == other.centroids.shape
            and self.centroids.tobytes() == other.centroids.tobytes()
        )


def bits_per_code(m: int, k: int) -> int:
    """Memory of one PQ code: ``m * log2(k)`` bits."""
    return m * math.ceil(math.log2(k)) if k > 1 else 0


def train_pq(training: VectorSet, m: int, k: int, seed: int, iters: int = 25) -> Codebook:
    """Train one k-means sub-codebook per ``d/m``-wide slice.

    Slice ``j`` is clustered with seed ``seed + j``.
    """
    if m < 1 or training.d % m != 0:
        raise ArgumentError(f"d={training.d} is not divisible by m={m}", "m")
    if not 1 <= k <= MAX_K:
        raise ArgumentError(f"k must be in [1, {MAX_K}], got {k}", "k")
    if training.n < k:
        raise ArgumentError(f"need at least k={k} training vectors, got {training.n}", "training")

    dsub = training.d // m
    subs = []
    for j in range(m):
        params = KMeansParams(k=k, iters=iters, seed=(seed + j) % (MAX_SEED + 1))
        subs.append(kmeans(training.slice_dims(j * dsub, (j + 1) * dsub), params).data)
        logger.debug("Trained sub-codebook %d/%d", j + 1, m)
    return Codebook(np.stack(subs))


def _check_vectors(cb: Codebook, d: int) -> None:
    if d != cb.d:
        raise ArgumentError(f"dimension mismatch: codebook d={cb.d}, vector d={d}", "x")


def encode_batch(cb: Codebook, x: VectorSet) -> PQCodes:
    """Encode every row: component ``j`` is the nearest codeword of slice ``j``."""
    if x.n == 0:
        return PQCodes(np.zeros((0, cb.m), dtype=np.uint8))
    _check_vectors(cb, x.d)
    codes = np.empty((x.n, cb.m), dtype=np.uint8)
    for j in range(cb.m):
        sub = x.data[:, j * cb.dsub : (j + 1) * cb.dsub]
        codes[:, j] = assign_batch(cb.sub_codebook(j), sub)
    return PQCodes(codes)


def encode(cb: Codebook, x: np.ndarray) -> np.ndarray:
    """Code row (``m`` integers) of a single vector."""
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 1:
        raise ArgumentError(f"expected one vector, got shape {x.shape}", "x")
    _check_vectors(cb, x.shape[0])
    return encode_batch(cb, VectorSet(x[None, :])).codes[0].copy()


def _check_codes(cb: Codebook, codes: PQCodes) -> None:
    if codes.m != cb.m:
        raise ArgumentError(f"codes have m={codes.m}, codebook has m={cb.m}", "codes")
    if codes.n and int(codes.codes.max()) >= cb.k:
        row, col = np.argwhere(codes.codes >= cb.k)[0]
        raise CorruptionError(
            f"code {int(codes.codes[row, col])} out of range for k={cb.k}",
            row=int(row),
            column=int(col),
        )


def decode(cb: Codebook, codes: PQCodes) -> VectorSet:
    """Concatenate ``c_{j, codes[n, j]}`` over ``j`` for every row."""
    _check_codes(cb, codes)
    if codes.n == 0:
        return VectorSet.empty(cb.d)
    parts = [cb.centroids[j][codes.codes[:, j]] for j in range(cb.m)]
    return VectorSet(np.concatenate(parts, axis=1))


def build_lut(cb: Codebook, q: np.ndarray) -> LUTf:
    """Per-subspace squared distances from the query to every codeword."""
    q = np.asarray(q, dtype=np.float32)
    if q.ndim != 1:
        raise ArgumentError(f"expected one query vector, got shape {q.shape}", "q")
    _check_vectors(cb, q.shape[0])
    diff = cb.centroids - q.reshape(cb.m, 1, cb.dsub)
    return LUTf(np.einsum("jtd,jtd->jt", diff, diff))


def adc_distances(lut: LUTf, codes: PQCodes) -> np.ndarray:
    """``sum_j lut[j, codes[n, j]]`` for every row, accumulated in float32."""
    if codes.m != lut.m:
        raise ArgumentError(f"codes have m={codes.m}, table has m={lut.m}", "codes")
    dist = np.zeros(codes.n, dtype=np.float32)
    for j in range(lut.m):
        dist += lut.values[j][codes.codes[:, j]]
    return dist


def adc_scan(lut: LUTf, codes: PQCodes, topk: int) -> SearchResult:
    """Plain table-lookup scan; the ``topk`` smallest, ascending, ties by lower id.

    ``topk`` larger than ``codes.n`` clamps.
    """
    if topk < 1:
        raise ArgumentError(f"topk must be >= 1, got {topk}", "topk")
    return select_topk(adc_distances(lut, codes), topk)


# --- Serialized code accounting ---


def code_size_bytes(n: int, m: int, k: int) -> int:
    """Serialized size of ``n`` codes: nibble pairs for ``k <= 16``, bytes otherwise."""
    if k <= 16:
        return (n * m + 1) // 2
    if k <= MAX_K:
        return n * m
    raise ArgumentError(f"k must be <= {MAX_K}, got {k}", "k")


def serialize_codes(codes: PQCodes, k: int) -> bytes:
    """Row-major code stream; for ``k <= 16`` two codes per byte, first in the low nibble."""
    flat = codes.codes.reshape(-1)
    if flat.size and int(flat.max()) >= k:
        raise ArgumentError(f"code {int(flat.max())} out of range for k={k}", "codes")
    if k > 16:
        code_size_bytes(codes.n, codes.m, k)
        return flat.tobytes()
    if flat.size % 2:
        flat = np.append(flat, np.uint8(0))
    return (flat[0::2] | (flat[1::2] << 4)).astype(np.uint8).tobytes()


def deserialize_codes(buf: bytes, n: int, m: int, k: int) -> PQCodes:
    if len(buf) != code_size_bytes(n, m, k):
        raise ArgumentError(
            f"expected {code_size_bytes(n, m, k)} bytes, got {len(buf)}", "buf"
        )
    raw = np.frombuffer(buf, dtype=np.uint8)
    if k > 16:
        return PQCodes(raw.reshape(n, m).copy())
    flat = np.empty(raw.size * 2, dtype=np.uint8)
    flat[0::2] = raw & 0x0F
    flat[1::2] = raw >> 4
    return PQCodes(flat[: n * m].reshape(n, m))
