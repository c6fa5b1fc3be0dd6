"""Seeded property suites run by ``nibblescan selftest``.

Three suites:

* ``kernels``     every vector backend matches the scalar reference byte for byte
* ``pack``        pack/unpack is the identity and follows the block layout
* ``error-bound`` the 8-bit table reconstructs sums within ``0.5 * m / scale``
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any

import numpy as np

from nibblescan._types import LUTf, PQCodes
from nibblescan.dataset import make_rng
from nibblescan.errors import ArgumentError, PropertyError
from nibblescan.fastscan import (
    BLOCK_SIZE,
    FASTSCAN_K,
    PackedCodeBlocks,
    accumulate_all,
    pack_codes,
    quantize_lut,
    unpack_codes,
)
from nibblescan.kernels import (
    LANE_BYTES,
    MAX_SUBQUANTIZERS,
    REGISTER_BYTES,
    available_backends,
    get_backend,
    resolve_backend_name,
)

logger = logging.getLogger(__name__)

DEFAULT_CASES = 10_000
ACCUMULATE_MS = (1, 4, 16, 32)


@dataclass
class SuiteReport:
    """Outcome of one property over its generated cases."""

    name: str
    cases: int
    passed: bool
    message: str = ""
    counterexample: Any | None = None


@dataclass
class SelftestReport:
    suites: list[SuiteReport]

    @property
    def passed(self) -> bool:
        return all(suite.passed for suite in self.suites)

    @property
    def first_failure(self) -> SuiteReport | None:
        return next((suite for suite in self.suites if not suite.passed), None)

    def lines(self) -> list[str]:
        out = []
        for suite in self.suites:
            status = "PASS" if suite.passed else "FAIL"
            line = f"{status} {suite.name} ({suite.cases} cases)"
            if suite.message:
                line += f": {suite.message}"
            out.append(line)
        return out

    def raise_for_failure(self) -> None:
        failure = self.first_failure
        if failure is not None:
            raise PropertyError(failure.name, failure.message, failure.counterexample)


def _first_mismatch(expected: np.ndarray, got: np.ndarray) -> int | None:
    diff = (expected != got).reshape(expected.shape[0], -1).any(axis=1)
    hits = np.flatnonzero(diff)
    return int(hits[0]) if hits.size else None


# --- Kernel equivalence ---


def check_kernels(
    rng: np.random.Generator,
    cases: int,
    reference: str = "scalar",
    candidates: tuple[str, ...] = ("simd128x2", "simd256"),
) -> list[SuiteReport]:
    """Compare shuffle, movemask and accumulate of each candidate with ``reference``."""
    ref = get_backend(reference)
    tables = rng.integers(0, 256, size=(cases, REGISTER_BYTES), dtype=np.uint8)
    idx = rng.integers(0, 256, size=(cases, REGISTER_BYTES), dtype=np.uint8)
    want_shuffle = ref.shuffle(tables, idx)
    want_mask = ref.movemask(tables)

    n_blocks = max(1, cases // 64)
    acc_inputs = []
    for m in ACCUMULATE_MS:
        lut = rng.integers(0, 256, size=(m, LANE_BYTES), dtype=np.uint8)
        blocks = rng.integers(0, 256, size=(n_blocks, m, LANE_BYTES), dtype=np.uint8)
        acc_inputs.append((lut, blocks))
    # Largest table the 16-bit accumulators allow, every entry saturated.
    acc_inputs.append(
        (
            np.full((MAX_SUBQUANTIZERS, LANE_BYTES), 255, dtype=np.uint8),
            rng.integers(0, 256, size=(1, MAX_SUBQUANTIZERS, LANE_BYTES), dtype=np.uint8),
        )
    )
    want_acc = [ref.accumulate(lut, blocks) for lut, blocks in acc_inputs]

    reports = []
    for name in candidates:
        backend = get_backend(name)
        suite = f"kernels:{reference}-vs-{name}"
        report = SuiteReport(suite, cases, True)

        got = backend.shuffle(tables, idx)
        bad = _first_mismatch(want_shuffle, got)
        if bad is not None:
            report = SuiteReport(
                suite,
                cases,
                False,
                "lane_pair_shuffle differs from the reference",
                {
                    "table": tables[bad].tolist(),
                    "idx": idx[bad].tolist(),
                    "expected": want_shuffle[bad].tolist(),
                    "got": got[bad].tolist(),
                },
            )
            reports.append(report)
            continue

        got_mask = backend.movemask(tables)
        bad = _first_mismatch(want_mask[:, None], got_mask[:, None])
        if bad is not None:
            report = SuiteReport(
                suite,
                cases,
                False,
                "movemask32 differs from the reference",
                {
                    "v": tables[bad].tolist(),
                    "expected": int(want_mask[bad]),
                    "got": int(got_mask[bad]),
                },
            )
            reports.append(report)
            continue

        for (lut, blocks), want in zip(acc_inputs, want_acc):
            got_acc = backend.accumulate(lut, blocks)
            bad = _first_mismatch(want, got_acc)
            if bad is not None:
                report = SuiteReport(
                    suite,
                    cases,
                    False,
                    f"block_accumulate differs from the reference (m={lut.shape[0]})",
                    {
                        "lut": lut.tolist(),
                        "block": blocks[bad].tolist(),
                        "expected": want[bad].tolist(),
                        "got": got_acc[bad].tolist(),
                    },
                )
                break
        reports.append(report)
    return reports


# --- Packing ---


def _layout_mismatch(codes: np.ndarray, packed: PackedCodeBlocks) -> tuple[int, int] | None:
    """First (vector, subquantizer) whose nibble is not where the layout puts it."""
    for i in range(codes.shape[0]):
        b, slot = divmod(i, BLOCK_SIZE)
        half, p = divmod(slot, LANE_BYTES)
        byte = packed.blocks[b, :, p]
        stored = (byte >> 4) if half else (byte & 0x0F)
        wrong = np.flatnonzero(stored != codes[i])
        if wrong.size:
            return i, int(wrong[0])
    return None


def check_pack(
    rng: np.random.Generator, cases: int, inject_corruption: bool = False
) -> SuiteReport:
    """Round-trip random code matrices through the packed layout.

    With ``inject_corruption`` the first packed blob has one nibble flipped
    before it is unpacked, which this suite must catch.
    """
    name = "pack"
    for case in range(cases):
        n = int(rng.integers(1 if case == 0 else 0, 3 * BLOCK_SIZE + 1))
        m = int(rng.integers(1, 17))
        codes = rng.integers(0, FASTSCAN_K, size=(n, m), dtype=np.uint8)
        packed = pack_codes(PQCodes(codes))

        if inject_corruption and case == 0:
            blocks = packed.blocks.copy()
            blocks[0, 0, 0] ^= 0x01
            packed = PackedCodeBlocks(n=packed.n, m=packed.m, blocks=blocks)
            logger.warning("Injected a corrupted nibble into the first packed blob")

        back = unpack_codes(packed).codes
        if not np.array_equal(back, codes):
            row, col = np.argwhere(back != codes)[0]
            return SuiteReport(
                name,
                case + 1,
                False,
                "unpack(pack(codes)) differs from codes",
                {
                    "n": n,
                    "m": m,
                    "row": int(row),
                    "subquantizer": int(col),
                    "expected": int(codes[row, col]),
                    "got": int(back[row, col]),
                    "packed_block0": packed.blocks[0].tolist(),
                },
            )
        if case < 64:
            where = _layout_mismatch(codes, packed)
            if where is not None:
                return SuiteReport(
                    name,
                    case + 1,
                    False,
                    "packed nibble is not at its block position",
                    {"n": n, "m": m, "vector": where[0], "subquantizer": where[1]},
                )
    return SuiteReport(name, cases, True)


# --- Quantization error ---


def check_error_bound(
    rng: np.random.Generator, queries: int, n: int = 1000, m: int = 16, backend: str | None = None
) -> SuiteReport:
    """``|f(acc) - sum_j lut[j, code_j]| <= 0.5 * m / scale`` and no clipped entries."""
    name = "error-bound"
    for case in range(queries):
        magnitude = float(10.0 ** rng.uniform(-3, 3))
        values = (rng.random((m, FASTSCAN_K)) * magnitude).astype(np.float32)
        lut = LUTf(values)
        qlut = quantize_lut(lut)
        spread = float(np.ptp(values, axis=1).max())
        if spread > 0 and int(qlut.bytes.max()) != 255:
            return SuiteReport(
                name,
                case + 1,
                False,
                "widest table row does not reach 255",
                {"lut": values.tolist(), "scale": qlut.scale},
            )

        codes = rng.integers(0, FASTSCAN_K, size=(n, m), dtype=np.uint8)
        approx = qlut.dequantize(accumulate_all(qlut, pack_codes(PQCodes(codes)), backend=backend))
        exact = values.astype(np.float64)[np.arange(m), codes].sum(axis=1)
        bound = 0.5 * m / qlut.scale
        err = np.abs(approx - exact)
        worst = int(err.argmax())
        # Relative slack covers float64 rounding of the two sums.
        if err[worst] > bound * (1 + 1e-9) + 1e-12 * abs(exact[worst]):
            return SuiteReport(
                name,
                case + 1,
                False,
                f"reconstruction error {err[worst]:.6g} exceeds bound {bound:.6g}",
                {
                    "lut": values.tolist(),
                    "code": codes[worst].tolist(),
                    "exact": float(exact[worst]),
                    "approx": float(approx[worst]),
                },
            )
    return SuiteReport(name, queries, True)


def run_selftest(
    cases: int = DEFAULT_CASES,
    seed: int = 0,
    compare: tuple[str, str] | None = None,
    inject_corruption: bool = False,
) -> SelftestReport:
    """Run every suite on inputs drawn from one seeded generator."""
    if cases < 1:
        raise ArgumentError(f"cases must be >= 1, got {cases}", "cases")
    if compare is not None:
        reference, candidate = (resolve_backend_name(name) for name in compare)
        candidates: tuple[str, ...] = (candidate,)
    else:
        reference = "scalar"
        candidates = tuple(name for name in available_backends() if name != reference)

    rng = make_rng(seed)
    suites = check_kernels(rng, cases, reference, candidates)
    suites.append(check_pack(rng, max(1, cases // 10), inject_corruption))
    suites.append(check_error_bound(rng, max(1, cases // 100), backend=candidates[-1]))
    for suite in suites:
        logger.info("%s %s", "PASS" if suite.passed else "FAIL", suite.name)
    return SelftestReport(suites)
