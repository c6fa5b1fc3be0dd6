"""Inverted file index over 4-bit PQ codes.

Search is the usual three steps: scan the coarse centroids, keep the
``nprobe`` nearest lists, then fast-scan those lists with one quantized table
built for the query. Codes encode raw vectors (no residuals), which is what
lets a single table serve every probed list.
"""

from __future__ import annotations

import logging
import os
import struct
import time
from collections.abc import Callable
from pathlib import Path
from typing import Protocol

import numpy as np
from pydantic import ValidationError

from nibblescan._types import PQCodes, SearchEvent, SearchResult, VectorSet
from nibblescan.errors import ArgumentError, FormatError
from nibblescan.fastscan import (
    BLOCK_SIZE,
    FASTSCAN_K,
    PackedCodeBlocks,
    QuantizedLUT,
    accumulate_all,
    pack_codes,
    quantize_lut,
    unpack_codes,
)
from nibblescan.kmeans import assign_batch, kmeans, sq_distances
from nibblescan.params import MAX_SEED, IndexParams, KMeansParams, SearchParams
from nibblescan.pq import Codebook, build_lut, encode_batch, train_pq
from nibblescan.topk import select_topk

logger = logging.getLogger(__name__)

MAGIC = b"PQFS"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIIIQQ")


class CoarseQuantizer(Protocol):
    """Chooses lists for vectors and queries. A graph index could stand in here."""

    @property
    def centroids(self) -> VectorSet: ...

    def assign(self, x: VectorSet) -> np.ndarray:
        """Nearest list of every row."""
        ...

    def nprobe_nearest(self, q: np.ndarray, nprobe: int) -> np.ndarray:
        """The ``nprobe`` nearest lists, nearest first, ties by lower list id."""
        ...


class FlatCoarseQuantizer:
    """Exact linear scan over the coarse centroids."""

    def __init__(self, centroids: VectorSet) -> None:
        self._centroids = centroids

    @property
    def centroids(self) -> VectorSet:
        return self._centroids

    def assign(self, x: VectorSet) -> np.ndarray:
        return assign_batch(self._centroids, x)

    def nprobe_nearest(self, q: np.ndarray, nprobe: int) -> np.ndarray:
        dist = sq_distances(np.asarray(q, dtype=np.float32)[None, :], self._centroids.data)[0]
        return select_topk(dist, nprobe).ids


class InvertedList:
    """Ids plus packed codes of one list.

    Complete 32-vector blocks are stored packed; the trailing partial block is
    kept as unpacked shadow codes until it fills, so appends never rewrite a
    full block.
    """

    def __init__(self, m: int) -> None:
        self.m = m
        self._ids: list[np.ndarray] = []
        self._full: list[np.ndarray] = []
        self._tail = np.zeros((0, m), dtype=np.uint8)
        self._size = 0
        self._cache: tuple[np.ndarray, PackedCodeBlocks] | None = None

    def __len__(self) -> int:
        return self._size

    def append(self, ids: np.ndarray, codes: np.ndarray) -> None:
        if ids.shape[0] == 0:
            return
        self._ids.append(np.asarray(ids, dtype=np.int64))
        pending = np.concatenate([self._tail, codes]) if self._tail.size else codes
        n_complete = (pending.shape[0] // BLOCK_SIZE) * BLOCK_SIZE
        if n_complete:
            self._full.append(pack_codes(PQCodes(pending[:n_complete])).blocks)
        self._tail = np.array(pending[n_complete:], dtype=np.uint8)
        self._size += ids.shape[0]
        self._cache = None

    @property
    def ids(self) -> np.ndarray:
        return self._materialize()[0]

    @property
    def packed(self) -> PackedCodeBlocks:
        return self._materialize()[1]

    def _materialize(self) -> tuple[np.ndarray, PackedCodeBlocks]:
        if self._cache is None:
            ids = np.concatenate(self._ids) if self._ids else np.zeros(0, dtype=np.int64)
            parts = list(self._full)
            if self._tail.shape[0]:
                parts.append(pack_codes(PQCodes(self._tail)).blocks)
            blocks = (
                np.concatenate(parts) if parts else np.zeros((0, self.m, 16), dtype=np.uint8)
            )
            self._cache = (ids, PackedCodeBlocks(n=self._size, m=self.m, blocks=blocks))
        return self._cache

    @classmethod
    def from_packed(cls, ids: np.ndarray, packed: PackedCodeBlocks) -> InvertedList:
        """Rebuild a list from its stored form, restoring the shadow tail."""
        inv = cls(packed.m)
        n_complete = (packed.n // BLOCK_SIZE) * BLOCK_SIZE
        if n_complete:
            inv._full.append(np.array(packed.blocks[: n_complete // BLOCK_SIZE]))
        if packed.n > n_complete:
            inv._tail = np.array(unpack_codes(packed).codes[n_complete:])
        if ids.shape[0]:
            inv._ids.append(np.array(ids, dtype=np.int64))
        inv._size = packed.n
        return inv


class IVFIndex:
    """Coarse centroids, a ``k = 16`` codebook and ``nlist`` inverted lists."""

    def __init__(
        self,
        quantizer: CoarseQuantizer,
        codebook: Codebook,
        seed: int = 0,
    ) -> None:
        if codebook.k != FASTSCAN_K:
            raise ArgumentError(f"fast-scan index needs k=16, got k={codebook.k}", "codebook")
        if quantizer.centroids.d != codebook.d:
            raise ArgumentError(
                f"centroids d={quantizer.centroids.d} but codebook d={codebook.d}", "codebook"
            )
        self.quantizer = quantizer
        self.codebook = codebook
        self.seed = seed
        self.lists = [InvertedList(codebook.m) for _ in range(quantizer.centroids.n)]
        self.lut_builds = 0

    @property
    def centroids(self) -> VectorSet:
        return self.quantizer.centroids

    @property
    def nlist(self) -> int:
        return len(self.lists)

    @property
    def d(self) -> int:
        return self.codebook.d

    @property
    def m(self) -> int:
        return self.codebook.m

    @property
    def ntotal(self) -> int:
        return sum(len(inv) for inv in self.lists)

    def list_sizes(self) -> list[int]:
        return [len(inv) for inv in self.lists]

    def stored_ids(self) -> np.ndarray:
        """Ids of every stored vector, in list order."""
        parts = [inv.ids for inv in self.lists if len(inv)]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)

    def add(self, vectors: VectorSet, base_id: int | None = None) -> IVFIndex:
        """Append vectors with ids ``base_id, base_id + 1, ...``.

        ``base_id`` defaults to one past the largest stored id. Ids already in
        the index are rejected before any list changes.
        """
        if vectors.n == 0:
            return self
        if vectors.d != self.d:
            raise ArgumentError(f"dimension mismatch: index d={self.d}, vectors d={vectors.d}")
        existing = self.stored_ids()
        if base_id is None:
            start = int(existing.max()) + 1 if existing.size else 0
        else:
            start = base_id
        if start < 0:
            raise ArgumentError(f"base_id must be >= 0, got {start}", "base_id")
        stop = start + vectors.n
        clash = existing[(existing >= start) & (existing < stop)]
        if clash.size:
            raise ArgumentError(
                f"ids {start}..{stop - 1} overlap stored id {int(clash.min())}", "base_id"
            )
        ids = np.arange(start, stop, dtype=np.int64)
        labels = self.quantizer.assign(vectors)
        codes = encode_batch(self.codebook, vectors).codes
        order = np.argsort(labels, kind="stable")
        bounds = np.searchsorted(labels[order], np.arange(self.nlist + 1))
        for list_id in range(self.nlist):
            members = order[bounds[list_id] : bounds[list_id + 1]]
            if members.size:
                self.lists[list_id].append(ids[members], codes[members])
        logger.debug("Added %d vectors (ntotal=%d)", vectors.n, self.ntotal)
        return self

    def prepare_query(self, q: np.ndarray) -> QuantizedLUT:
        """Build and quantize the query's table; counted in ``lut_builds``."""
        self.lut_builds += 1
        return quantize_lut(build_lut(self.codebook, q))

    def search(
        self,
        q: np.ndarray,
        params: SearchParams,
        *,
        backend: str | None = None,
        on_event: Callable[[SearchEvent], None] | None = None,
    ) -> SearchResult:
        """Probe the ``nprobe`` nearest lists and rank their members by ``f(acc)``."""
        if params.nprobe > self.nlist:
            raise ArgumentError(
                f"nprobe={params.nprobe} exceeds nlist={self.nlist}", "nprobe"
            )
        q = np.asarray(q, dtype=np.float32)
        if q.shape != (self.d,):
            raise ArgumentError(f"expected a query of dimension {self.d}, got {q.shape}", "q")

        start = time.perf_counter()
        probes = self.quantizer.nprobe_nearest(q, params.nprobe)
        if on_event is not None:
            on_event(
                SearchEvent(type="coarse_done", timestamp=time.time(), lists=probes.tolist())
            )

        qlut = self.prepare_query(q)
        if on_event is not None:
            on_event(SearchEvent(type="lut_built", timestamp=time.time()))

        cand_ids: list[np.ndarray] = []
        cand_acc: list[np.ndarray] = []
        for list_id in probes.tolist():
            inv = self.lists[list_id]
            if len(inv) == 0:
                continue
            cand_ids.append(inv.ids)
            cand_acc.append(accumulate_all(qlut, inv.packed, backend=backend))
            if on_event is not None:
                on_event(
                    SearchEvent(
                        type="list_scanned",
                        timestamp=time.time(),
                        list_id=list_id,
                        count=len(inv),
                    )
                )

        if cand_ids:
            hit = select_topk(np.concatenate(cand_acc), params.topk, np.concatenate(cand_ids))
            result = SearchResult(hit.ids, qlut.dequantize(hit.distances))
        else:
            result = SearchResult(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.float64))

        if on_event is not None:
            on_event(
                SearchEvent(
                    type="search_done",
                    timestamp=time.time(),
                    count=len(result),
                    duration_ms=(time.perf_counter() - start) * 1000,
                )
            )
        return result

    def search_batch(
        self, queries: VectorSet, params: SearchParams, *, backend: str | None = None
    ) -> list[SearchResult]:
        return [self.search(queries.row(i), params, backend=backend) for i in range(queries.n)]

    def flat_codes(self) -> tuple[np.ndarray, PQCodes]:
        """Every stored code, ordered by id."""
        ids = [inv.ids for inv in self.lists if len(inv)]
        codes = [unpack_codes(inv.packed).codes for inv in self.lists if len(inv)]
        if not ids:
            return np.zeros(0, dtype=np.int64), PQCodes(np.zeros((0, self.m), dtype=np.uint8))
        all_ids = np.concatenate(ids)
        order = np.argsort(all_ids, kind="stable")
        return all_ids[order], PQCodes(np.concatenate(codes)[order])


def train_ivf(
    training: VectorSet,
    nlist: int,
    m: int,
    seed: int,
    kmeans_iters: int = 25,
) -> IVFIndex:
    """Train coarse centroids (seed ``seed``) and a k=16 codebook (seed ``seed + 1``)."""
    try:
        params = IndexParams(nlist=nlist, m=m, seed=seed, kmeans_iters=kmeans_iters)
    except ValidationError as e:
        raise ArgumentError(str(e)) from e
    if training.n < params.nlist:
        raise ArgumentError(
            f"need at least nlist={params.nlist} training vectors, got {training.n}", "training"
        )
    if training.d % params.m != 0:
        raise ArgumentError(f"d={training.d} is not divisible by m={params.m}", "m")

    logger.debug("Training %d coarse centroids on %d vectors", params.nlist, training.n)
    centroids = kmeans(
        training, KMeansParams(k=params.nlist, iters=params.kmeans_iters, seed=params.seed)
    )
    pq_seed = (params.seed + 1) % (MAX_SEED + 1)
    codebook = train_pq(training, params.m, FASTSCAN_K, pq_seed, params.kmeans_iters)
    return IVFIndex(FlatCoarseQuantizer(centroids), codebook, seed=params.seed)


# --- Persistence ---


class _Reader:
    """Cursor over a byte buffer that reports truncation with its offset."""

    def __init__(self, buf: bytes, path: str) -> None:
        self.buf = buf
        self.path = path
        self.offset = 0

    def take(self, nbytes: int, what: str) -> bytes:
        if nbytes < 0 or self.offset + nbytes > len(self.buf):
            raise FormatError(f"truncated {what}", offset=self.offset, path=self.path)
        chunk = self.buf[self.offset : self.offset + nbytes]
        self.offset += nbytes
        return chunk

    def array(self, dtype: str, count: int, what: str) -> np.ndarray:
        item = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(count * item, what), dtype=dtype).copy()


def save(index: IVFIndex, path: str | os.PathLike[str]) -> None:
    """Write the index container (little-endian)."""
    cb = index.codebook
    parts = [
        _HEADER.pack(
            MAGIC,
            FORMAT_VERSION,
            index.d,
            index.nlist,
            cb.m,
            cb.k,
            index.seed,
            index.ntotal,
        ),
        index.centroids.data.astype("<f4").tobytes(),
        cb.centroids.astype("<f4").tobytes(),
    ]
    for inv in index.lists:
        parts.append(struct.pack("<Q", len(inv)))
        parts.append(inv.ids.astype("<i8").tobytes())
        parts.append(inv.packed.to_bytes())
    Path(path).write_bytes(b"".join(parts))
    logger.debug("Saved index (nlist=%d, ntotal=%d) to %s", index.nlist, index.ntotal, path)


def load(path: str | os.PathLike[str]) -> IVFIndex:
    """Read an index container written by :func:`save`."""
    path_str = str(path)
    reader = _Reader(Path(path).read_bytes(), path_str)

    magic = reader.buf[: len(MAGIC)]
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0, path=path_str)
    header = reader.take(_HEADER.size, "header")
    _, version, d, nlist, m, k, seed, ntotal = _HEADER.unpack(header)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}", offset=4, path=path_str)
    if m == 0 or d % m != 0 or k != FASTSCAN_K or nlist == 0:
        raise FormatError(
            f"inconsistent parameters d={d}, nlist={nlist}, m={m}, k={k}", offset=8, path=path_str
        )
    dsub = d // m

    centroids_at = reader.offset
    centroids = reader.array("<f4", nlist * d, "centroids").reshape(nlist, d)
    if not np.isfinite(centroids).all():
        raise FormatError("non-finite coarse centroid", offset=centroids_at, path=path_str)
    codebook_at = reader.offset
    codebook = reader.array("<f4", m * k * dsub, "codebook").reshape(m, k, dsub)
    if not np.isfinite(codebook).all():
        raise FormatError("non-finite codebook entry", offset=codebook_at, path=path_str)

    index = IVFIndex(FlatCoarseQuantizer(VectorSet(centroids)), Codebook(codebook), seed=seed)
    for list_id in range(nlist):
        (count,) = struct.unpack("<Q", reader.take(8, f"list {list_id} size"))
        ids = reader.array("<i8", count, f"list {list_id} ids")
        n_blocks = -(-count // BLOCK_SIZE)
        raw = reader.take(n_blocks * m * 16, f"list {list_id} codes")
        index.lists[list_id] = InvertedList.from_packed(
            ids, PackedCodeBlocks.from_bytes(count, m, raw)
        )

    if reader.offset != len(reader.buf):
        raise FormatError("trailing bytes after last list", offset=reader.offset, path=path_str)
    if index.ntotal != ntotal:
        raise FormatError(
            f"header says {ntotal} vectors, lists hold {index.ntotal}", offset=0, path=path_str
        )
    ids = index.stored_ids()
    if np.unique(ids).size != ids.size:
        raise FormatError("an id is stored more than once", path=path_str)
    logger.debug("Loaded index (nlist=%d, ntotal=%d) from %s", nlist, ntotal, path)
    return index
