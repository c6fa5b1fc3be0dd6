"""4-bit PQ fast scan: 8-bit lookup tables, nibble-packed blocks and the blocked scan.

Packed layout: codes are grouped in blocks of 32 vectors. Within block ``b``
and subquantizer ``j`` there are 16 bytes; byte ``p`` holds the code of vector
``32b + p`` in its low nibble and the code of vector ``32b + 16 + p`` in its
high nibble. A tail block is zero-padded.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from nibblescan._types import LUTf, PQCodes, SearchResult
from nibblescan.errors import ArgumentError
from nibblescan.kernels import (
    LANE_BYTES,
    REGISTER_BYTES,
    ScalarBackend,
    check_accumulate_inputs,
    check_register,
    get_backend,
)
from nibblescan.topk import select_topk

logger = logging.getLogger(__name__)

BLOCK_SIZE = 32
FASTSCAN_K = 16
SCALAR_WARN_BLOCKS = 1024


@dataclass(frozen=True, eq=False)
class QuantizedLUT:
    """8-bit table with reconstruction ``f(acc) = bias + acc / scale``."""

    bytes: np.ndarray
    bias: float
    scale: float

    def __post_init__(self) -> None:
        table = np.ascontiguousarray(self.bytes, dtype=np.uint8)
        if table.ndim != 2 or table.shape[1] != FASTSCAN_K:
            raise ArgumentError(f"expected an (m, 16) byte table, got {table.shape}", "bytes")
        if not self.scale > 0:
            raise ArgumentError(f"scale must be positive, got {self.scale}", "scale")
        table = table.view()
        table.setflags(write=False)
        object.__setattr__(self, "bytes", table)

    @property
    def m(self) -> int:
        return int(self.bytes.shape[0])

    def dequantize(self, acc: np.ndarray | int) -> np.ndarray:
        """Map summed table bytes back to float distances."""
        return self.bias + np.asarray(acc, dtype=np.float64) / self.scale


@dataclass(frozen=True, eq=False)
class PackedCodeBlocks:
    """Nibble-packed codes, ``blocks`` shaped ``(n_blocks, m, 16)``."""

    n: int
    m: int
    blocks: np.ndarray

    def __post_init__(self) -> None:
        blocks = np.ascontiguousarray(self.blocks, dtype=np.uint8)
        expected = (-(-self.n // BLOCK_SIZE), self.m, LANE_BYTES)
        if blocks.shape != expected:
            raise ArgumentError(f"expected blocks of shape {expected}, got {blocks.shape}")
        blocks = blocks.view()
        blocks.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)

    @property
    def n_blocks(self) -> int:
        return int(self.blocks.shape[0])

    @property
    def nbytes(self) -> int:
        return self.n_blocks * self.m * LANE_BYTES

    def valid_count(self, b: int) -> int:
        """Number of real (non-padding) vectors in block ``b``."""
        if not 0 <= b < self.n_blocks:
            raise ArgumentError(f"block {b} out of range [0, {self.n_blocks})", "b")
        return min(BLOCK_SIZE, self.n - b * BLOCK_SIZE)

    def block(self, b: int) -> np.ndarray:
        self.valid_count(b)
        return self.blocks[b]

    def to_bytes(self) -> bytes:
        return self.blocks.tobytes()

    @classmethod
    def from_bytes(cls, n: int, m: int, buf: bytes) -> PackedCodeBlocks:
        n_blocks = -(-n // BLOCK_SIZE)
        expected = n_blocks * m * LANE_BYTES
        if len(buf) != expected:
            raise ArgumentError(f"expected {expected} packed bytes, got {len(buf)}", "buf")
        blocks = np.frombuffer(buf, dtype=np.uint8).reshape(n_blocks, m, LANE_BYTES)
        return cls(n=n, m=m, blocks=blocks)

    def equals(self, other: PackedCodeBlocks) -> bool:
        return self.n == other.n and self.m == other.m and self.to_bytes() == other.to_bytes()


@dataclass(frozen=True, eq=False)
class Reg32:
    """Two 16-byte lanes handled as one 32-byte register."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.ascontiguousarray(self.data)
        if data.shape != (REGISTER_BYTES,):
            raise ArgumentError(f"a register holds exactly 32 bytes, got {data.shape}", "data")
        if data.dtype != np.uint8:
            if data.size and (data.min() < 0 or data.max() > 255):
                raise ArgumentError("register bytes must be in [0, 255]", "data")
            data = data.astype(np.uint8)
        data = data.view()
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_lanes(cls, lane0: np.ndarray | list[int], lane1: np.ndarray | list[int]) -> Reg32:
        lane0 = np.asarray(lane0)
        lane1 = np.asarray(lane1)
        if lane0.shape != (LANE_BYTES,) or lane1.shape != (LANE_BYTES,):
            raise ArgumentError("each lane holds exactly 16 bytes")
        return cls(np.concatenate([lane0, lane1]))

    @classmethod
    def from_bytes(cls, raw: bytes) -> Reg32:
        return cls(np.frombuffer(raw, dtype=np.uint8))

    def lane(self, i: int) -> np.ndarray:
        if i not in (0, 1):
            raise ArgumentError(f"lane must be 0 or 1, got {i}", "i")
        return self.data[LANE_BYTES * i : LANE_BYTES * (i + 1)]

    def to_bytes(self) -> bytes:
        return self.data.tobytes()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Reg32):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()

    def __hash__(self) -> int:
        return hash(self.to_bytes())


# --- Table quantization ---


def _round_half_away(x: np.ndarray) -> np.ndarray:
    """Round non-negative values half away from zero."""
    return np.floor(x + 0.5)


def quantize_lut(lut: LUTf) -> QuantizedLUT:
    """Scalar-quantize a ``k = 16`` float table to bytes.

    Each row is shifted by its own minimum and scaled by one global factor
    ``255 / delta``, where ``delta`` is the widest row range, so no entry
    exceeds 255 and every entry is within ``0.5 / scale`` of the shifted value.
    """
    if lut.k != FASTSCAN_K:
        raise ArgumentError(f"fast scan needs k=16 tables, got k={lut.k}", "lut")
    values = lut.values.astype(np.float64)
    row_min = values.min(axis=1)
    shifted = values - row_min[:, None]
    delta = float((values.max(axis=1) - row_min).max()) if lut.m else 0.0
    scale = 255.0 / delta if delta > 0 else 1.0
    quantized = _round_half_away(shifted * scale)
    return QuantizedLUT(
        bytes=quantized.astype(np.uint8),
        bias=float(row_min.sum()),
        scale=scale,
    )


# --- Code packing ---


def pack_codes(codes: PQCodes) -> PackedCodeBlocks:
    """Arrange ``k = 16`` codes in 32-vector blocks, two vectors per byte."""
    n, m = codes.n, codes.m
    if n and int(codes.codes.max()) >= FASTSCAN_K:
        row, col = np.argwhere(codes.codes >= FASTSCAN_K)[0]
        raise ArgumentError(
            f"code {int(codes.codes[row, col])} at row {int(row)}, subquantizer {int(col)} "
            "does not fit in 4 bits",
            "codes",
        )
    n_blocks = -(-n // BLOCK_SIZE)
    padded = np.zeros((n_blocks * BLOCK_SIZE, m), dtype=np.uint8)
    padded[:n] = codes.codes
    # (n_blocks, 2 halves, 16 positions, m) -> (n_blocks, m, halves, positions)
    halves = padded.reshape(n_blocks, 2, LANE_BYTES, m).transpose(0, 3, 1, 2)
    blocks = halves[:, :, 0, :] | (halves[:, :, 1, :] << 4)
    return PackedCodeBlocks(n=n, m=m, blocks=blocks)


def unpack_codes(packed: PackedCodeBlocks) -> PQCodes:
    """Inverse of :func:`pack_codes`; padding is dropped."""
    lo = packed.blocks & 0x0F
    hi = packed.blocks >> 4
    halves = np.stack([lo, hi], axis=2)  # (n_blocks, m, 2, 16)
    flat = halves.transpose(0, 2, 3, 1).reshape(packed.n_blocks * BLOCK_SIZE, packed.m)
    return PQCodes(flat[: packed.n])


# --- Register primitives ---


def lane_pair_shuffle(table: Reg32, idx: Reg32, *, backend: str | None = None) -> Reg32:
    """Per-lane byte lookup: lane 0 indices read table lane 0, lane 1 read lane 1.

    An index byte with its high bit set produces 0.
    """
    kernel = get_backend(backend)
    return Reg32(kernel.shuffle(table.data, idx.data))


def movemask32(v: Reg32, *, backend: str | None = None) -> int:
    """Bit ``i`` of the result is the most significant bit of byte ``i``."""
    kernel = get_backend(backend)
    return int(kernel.movemask(v.data))


def shuffle_many(table: np.ndarray, idx: np.ndarray, *, backend: str | None = None) -> np.ndarray:
    """Batched :func:`lane_pair_shuffle` over ``(..., 32)`` arrays."""
    kernel = get_backend(backend)
    return kernel.shuffle(check_register(table, "table"), check_register(idx, "idx"))


def movemask_many(v: np.ndarray, *, backend: str | None = None) -> np.ndarray:
    """Batched :func:`movemask32` over ``(..., 32)`` arrays."""
    kernel = get_backend(backend)
    return kernel.movemask(check_register(v, "v"))


def block_accumulate(
    qlut: QuantizedLUT, block: np.ndarray, *, backend: str | None = None
) -> np.ndarray:
    """Sum table bytes for the 32 vectors of one packed block (uint16 lanes).

    ``acc[p]`` belongs to vector ``p`` of the block, ``acc[16 + p]`` to
    vector ``16 + p``.
    """
    block = np.asarray(block, dtype=np.uint8)
    check_accumulate_inputs(qlut.bytes, block[None, ...])
    return get_backend(backend).accumulate(qlut.bytes, block[None, ...])[0]


def accumulate_all(
    qlut: QuantizedLUT, packed: PackedCodeBlocks, *, backend: str | None = None
) -> np.ndarray:
    """Accumulators of every real vector, in vector order (uint16, length ``n``)."""
    if packed.m != qlut.m:
        raise ArgumentError(f"packed codes have m={packed.m}, table has m={qlut.m}", "packed")
    if packed.n == 0:
        return np.zeros(0, dtype=np.uint16)
    check_accumulate_inputs(qlut.bytes, packed.blocks)
    kernel = get_backend(backend)
    if isinstance(kernel, ScalarBackend) and packed.n_blocks > SCALAR_WARN_BLOCKS:
        logger.warning("Scanning %d blocks with the scalar reference backend", packed.n_blocks)
    acc = kernel.accumulate(qlut.bytes, packed.blocks)
    return acc.reshape(-1)[: packed.n]


def fastscan_distances(
    qlut: QuantizedLUT, packed: PackedCodeBlocks, *, backend: str | None = None
) -> np.ndarray:
    """``f(acc_n)`` for every real vector, float64."""
    return qlut.dequantize(accumulate_all(qlut, packed, backend=backend))


def fastscan_search(
    qlut: QuantizedLUT,
    packed: PackedCodeBlocks,
    topk: int,
    *,
    backend: str | None = None,
) -> SearchResult:
    """Rank packed vectors by ``f(acc)``; the ``topk`` smallest, ties by lower id.

    ``f`` is strictly increasing, so ranking runs on the integer accumulators
    and only the selected hits are dequantized.
    """
    if topk < 1:
        raise ArgumentError(f"topk must be >= 1, got {topk}", "topk")
    hit = select_topk(accumulate_all(qlut, packed, backend=backend), topk)
    return SearchResult(hit.ids, qlut.dequantize(hit.distances))
