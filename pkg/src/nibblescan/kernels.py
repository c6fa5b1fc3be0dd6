"""Byte-shuffle kernels behind the fast-scan search, with backend dispatch.

Every backend implements the same three primitives over 32-byte registers
split into two 16-byte lanes:

* ``shuffle``    per-lane byte table lookup; an index with bit 0x80 set yields 0
* ``movemask``   most significant bit of each byte packed into a 32-bit mask
* ``accumulate`` per-block sums of 8-bit table entries into 16-bit lanes

``scalar`` is the reference. ``simd128x2`` runs two independent 16-entry
lookups per step, the lane-pair arrangement of 128-bit hardware.
``simd256`` handles both lanes in one step, the shape of a native 256-bit
shuffle: a 32-entry gather with a lane offset, and for accumulation one
lookup per packed byte into a table of byte pairs. Both vector backends must
match ``scalar`` bit for bit.
"""

from __future__ import annotations

import logging
import os
from typing import Protocol

import numpy as np

from nibblescan.errors import ArgumentError

logger = logging.getLogger(__name__)

BACKEND_ENV_VAR = "NIBBLESCAN_BACKEND"
REGISTER_BYTES = 32
LANE_BYTES = 16
MAX_SUBQUANTIZERS = 256

_LANE_OFFSET = np.repeat(np.array([0, LANE_BYTES], dtype=np.uint8), LANE_BYTES)
_BIT_WEIGHTS = np.left_shift(np.uint64(1), np.arange(REGISTER_BYTES, dtype=np.uint64))
_BYTE_LOW = np.arange(256, dtype=np.intp) & 0x0F
_BYTE_HIGH = np.arange(256, dtype=np.intp) >> 4


class KernelBackend(Protocol):
    """Interface every kernel backend provides.

    Arrays carry any number of leading batch axes.
    """

    name: str

    def shuffle(self, table: np.ndarray, idx: np.ndarray) -> np.ndarray:
        """``(..., 32)`` uint8 tables and indices -> ``(..., 32)`` uint8."""
        ...

    def movemask(self, v: np.ndarray) -> np.ndarray:
        """``(..., 32)`` uint8 -> ``(...)`` uint32."""
        ...

    def accumulate(self, lut_bytes: np.ndarray, blocks: np.ndarray) -> np.ndarray:
        """``(m, 16)`` table and ``(nb, m, 16)`` packed blocks -> ``(nb, 32)`` uint16."""
        ...


class ScalarBackend:
    """Byte-at-a-time reference implementation."""

    name = "scalar"

    def shuffle(self, table: np.ndarray, idx: np.ndarray) -> np.ndarray:
        table, idx = np.broadcast_arrays(table, idx)
        out = np.zeros(idx.shape, dtype=np.uint8)
        for pos in np.ndindex(idx.shape[:-1]):
            t_row = table[pos].tolist()
            i_row = idx[pos].tolist()
            row = [0] * REGISTER_BYTES
            for i in range(REGISTER_BYTES):
                index = i_row[i]
                if index & 0x80:
                    continue
                row[i] = t_row[LANE_BYTES * (i // LANE_BYTES) + (index & 0x0F)]
            out[pos] = row
        return out

    def movemask(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(v.shape[:-1], dtype=np.uint32)
        for pos in np.ndindex(v.shape[:-1]):
            mask = 0
            for i, byte in enumerate(v[pos].tolist()):
                if byte & 0x80:
                    mask |= 1 << i
            out[pos] = mask
        return out

    def accumulate(self, lut_bytes: np.ndarray, blocks: np.ndarray) -> np.ndarray:
        lut = lut_bytes.tolist()
        nb, m, _ = blocks.shape
        out = np.zeros((nb, REGISTER_BYTES), dtype=np.uint16)
        for b in range(nb):
            acc = [0] * REGISTER_BYTES
            block = blocks[b].tolist()
            for j in range(m):
                row = lut[j]
                for p, byte in enumerate(block[j]):
                    acc[p] = (acc[p] + row[byte & 0x0F]) & 0xFFFF
                    acc[LANE_BYTES + p] = (acc[LANE_BYTES + p] + row[byte >> 4]) & 0xFFFF
            out[b] = acc
        return out


class Simd128x2Backend:
    """Two 128-bit lane lookups per step, vectorized over every leading axis."""

    name = "simd128x2"

    @staticmethod
    def _lookup16(table16: np.ndarray, idx16: np.ndarray) -> np.ndarray:
        picked = np.take_along_axis(table16, (idx16 & 0x0F).astype(np.intp), axis=-1)
        return np.where(idx16 & 0x80, np.uint8(0), picked).astype(np.uint8)

    def shuffle(self, table: np.ndarray, idx: np.ndarray) -> np.ndarray:
        table, idx = np.broadcast_arrays(table, idx)
        lo = self._lookup16(table[..., :LANE_BYTES], idx[..., :LANE_BYTES])
        hi = self._lookup16(table[..., LANE_BYTES:], idx[..., LANE_BYTES:])
        return np.concatenate([lo, hi], axis=-1)

    def movemask(self, v: np.ndarray) -> np.ndarray:
        msb = (v >> 7).astype(np.uint8)
        lo = np.packbits(msb[..., :LANE_BYTES], axis=-1, bitorder="little")
        hi = np.packbits(msb[..., LANE_BYTES:], axis=-1, bitorder="little")
        lanes = np.concatenate([lo, hi], axis=-1)
        return np.ascontiguousarray(lanes).view("<u4")[..., 0].astype(np.uint32)

    def accumulate(self, lut_bytes: np.ndarray, blocks: np.ndarray) -> np.ndarray:
        nb, m, _ = blocks.shape
        # One table row serves both lanes: low nibbles (vectors 0-15) fill
        # lane 0, high nibbles (vectors 16-31) lane 1.
        rows = lut_bytes.astype(np.uint16)
        acc = np.zeros((nb, REGISTER_BYTES), dtype=np.uint16)
        lane0, lane1 = acc[:, :LANE_BYTES], acc[:, LANE_BYTES:]
        nibbles = np.empty((nb, LANE_BYTES), dtype=np.uint8)
        looked_up = np.empty((nb, LANE_BYTES), dtype=np.uint16)
        for j in range(m):
            group = blocks[:, j, :]
            np.bitwise_and(group, 0x0F, out=nibbles)
            np.take(rows[j], nibbles, out=looked_up, mode="clip")
            lane0 += looked_up
            np.right_shift(group, 4, out=nibbles)
            np.take(rows[j], nibbles, out=looked_up, mode="clip")
            lane1 += looked_up
        return acc


class Simd256Backend:
    """Both lanes per step: 32-entry gathers, and byte-pair tables for accumulation."""

    name = "simd256"

    def shuffle(self, table: np.ndarray, idx: np.ndarray) -> np.ndarray:
        table, idx = np.broadcast_arrays(table, idx)
        flat = ((idx & 0x0F) + _LANE_OFFSET).astype(np.intp)
        picked = np.take_along_axis(table, flat, axis=-1)
        return np.where(idx & 0x80, np.uint8(0), picked).astype(np.uint8)

    def movemask(self, v: np.ndarray) -> np.ndarray:
        msb = (v >> 7).astype(np.uint64)
        return (msb * _BIT_WEIGHTS).sum(axis=-1, dtype=np.uint64).astype(np.uint32)

    def accumulate(self, lut_bytes: np.ndarray, blocks: np.ndarray) -> np.ndarray:
        nb, m, _ = blocks.shape
        # Entry b of a pair table holds row[b & 15] in its low half and
        # row[b >> 4] in its high half, so one lookup per packed byte serves
        # both lanes. With m <= 256 the low half stays below 2**16 and never
        # carries into the high half.
        pairs = lut_bytes[:, _BYTE_LOW].astype(np.uint32)
        pairs |= lut_bytes[:, _BYTE_HIGH].astype(np.uint32) << 16
        acc = np.zeros((nb, LANE_BYTES), dtype=np.uint32)
        looked_up = np.empty((nb, LANE_BYTES), dtype=np.uint32)
        for j in range(m):
            np.take(pairs[j], blocks[:, j, :], out=looked_up, mode="clip")
            acc += looked_up
        out = np.empty((nb, REGISTER_BYTES), dtype=np.uint16)
        out[:, :LANE_BYTES] = acc & 0xFFFF
        out[:, LANE_BYTES:] = acc >> 16
        return out


_BACKENDS: dict[str, KernelBackend] = {
    backend.name: backend for backend in (ScalarBackend(), Simd128x2Backend(), Simd256Backend())
}
AUTO_ORDER = ("simd256", "simd128x2", "scalar")


def available_backends() -> list[str]:
    """Names of every backend this build provides, reference first."""
    return ["scalar", "simd128x2", "simd256"]


def resolve_backend_name(name: str | None = None) -> str:
    """Map an explicit name, the environment override or ``auto`` to a backend name."""
    requested = name if name is not None else os.environ.get(BACKEND_ENV_VAR, "auto")
    requested = requested.strip().lower() or "auto"
    if requested == "auto":
        return next(candidate for candidate in AUTO_ORDER if candidate in _BACKENDS)
    if requested not in _BACKENDS:
        raise ArgumentError(
            f"unknown kernel backend {requested!r}; choose from "
            f"{', '.join([*available_backends(), 'auto'])}",
            "backend",
        )
    return requested


def get_backend(name: str | None = None) -> KernelBackend:
    """Backend instance for ``name`` (``None`` consults ``NIBBLESCAN_BACKEND``)."""
    resolved = resolve_backend_name(name)
    logger.debug("Kernel backend %s (requested %r)", resolved, name)
    return _BACKENDS[resolved]


def active_backend() -> str:
    """Diagnostics: name of the backend used when none is pinned explicitly."""
    return resolve_backend_name(None)


def check_register(array: np.ndarray, argument: str) -> np.ndarray:
    """Coerce to uint8 with a trailing axis of 32 bytes."""
    array = np.asarray(array)
    if array.shape[-1:] != (REGISTER_BYTES,):
        raise ArgumentError(f"expected trailing axis of 32 bytes, got {array.shape}", argument)
    return array.astype(np.uint8, copy=False)


def check_accumulate_inputs(lut_bytes: np.ndarray, blocks: np.ndarray) -> None:
    m = lut_bytes.shape[0]
    if m > MAX_SUBQUANTIZERS:
        raise ArgumentError(
            f"m={m} exceeds {MAX_SUBQUANTIZERS}; 16-bit accumulators could wrap", "m"
        )
    if lut_bytes.shape != (m, LANE_BYTES):
        raise ArgumentError(f"expected an (m, 16) table, got {lut_bytes.shape}", "lut_bytes")
    if blocks.ndim != 3 or blocks.shape[1:] != (m, LANE_BYTES):
        raise ArgumentError(
            f"expected blocks of shape (nb, {m}, 16), got {blocks.shape}", "blocks"
        )
