"""Test byte-shuffle kernel backends and dispatch."""

import numpy as np
import pytest

from nibblescan.errors import ArgumentError
from nibblescan.kernels import (
    BACKEND_ENV_VAR,
    active_backend,
    available_backends,
    check_accumulate_inputs,
    get_backend,
    resolve_backend_name,
)

VECTOR_BACKENDS = ["simd128x2", "simd256"]


def _shuffle_oracle(table, idx):
    out = []
    for i in range(32):
        if idx[i] & 0x80:
            out.append(0)
        else:
            out.append(int(table[16 * (i // 16) + (idx[i] % 16)]))
    return out


def _accumulate_oracle(lut, block):
    acc = [0] * 32
    for j in range(block.shape[0]):
        for p in range(16):
            acc[p] += int(lut[j][block[j, p] & 0x0F])
            acc[16 + p] += int(lut[j][block[j, p] >> 4])
    return acc


class TestDispatch:
    def test_available(self):
        assert available_backends() == ["scalar", "simd128x2", "simd256"]

    def test_auto_picks_widest(self, monkeypatch):
        monkeypatch.delenv(BACKEND_ENV_VAR, raising=False)
        assert resolve_backend_name() == "simd256"
        assert resolve_backend_name("auto") == "simd256"

    @pytest.mark.parametrize("name", ["scalar", "simd128x2", "simd256"])
    def test_environment_override(self, monkeypatch, name):
        monkeypatch.setenv(BACKEND_ENV_VAR, name)
        assert active_backend() == name
        assert get_backend().name == name

    def test_explicit_name_beats_environment(self, monkeypatch):
        monkeypatch.setenv(BACKEND_ENV_VAR, "scalar")
        assert get_backend("simd128x2").name == "simd128x2"

    def test_case_insensitive(self):
        assert resolve_backend_name(" SIMD256 ") == "simd256"

    def test_unknown_backend(self, monkeypatch):
        with pytest.raises(ArgumentError, match="unknown kernel backend"):
            resolve_backend_name("avx512")
        monkeypatch.setenv(BACKEND_ENV_VAR, "neon")
        with pytest.raises(ArgumentError):
            active_backend()


@pytest.mark.parametrize("name", available_backends())
class TestBackendPrimitives:
    def test_shuffle_identity_per_lane(self, name):
        table = np.arange(100, 132, dtype=np.uint8)
        idx = np.tile(np.arange(16, dtype=np.uint8), 2)
        assert get_backend(name).shuffle(table, idx).tolist() == table.tolist()

    def test_shuffle_high_bit_zeroes(self, name):
        table = np.full(32, 9, dtype=np.uint8)
        idx = np.full(32, 0x80, dtype=np.uint8)
        assert not get_backend(name).shuffle(table, idx).any()

    def test_shuffle_lanes_do_not_cross(self, name):
        """Lane 1 indices read lane 1 of the table even for small index values."""
        table = np.concatenate([np.zeros(16), np.ones(16)]).astype(np.uint8)
        idx = np.zeros(32, dtype=np.uint8)
        out = get_backend(name).shuffle(table, idx)
        assert out.tolist() == [0] * 16 + [1] * 16

    def test_shuffle_random_vs_oracle(self, name):
        rng = np.random.default_rng(0)
        tables = rng.integers(0, 256, size=(200, 32), dtype=np.uint8)
        idx = rng.integers(0, 256, size=(200, 32), dtype=np.uint8)
        out = get_backend(name).shuffle(tables, idx)
        for t, i, o in zip(tables, idx, out):
            assert o.tolist() == _shuffle_oracle(t, i)

    def test_movemask_extremes(self, name):
        backend = get_backend(name)
        assert int(backend.movemask(np.full(32, 0x80, dtype=np.uint8))) == 0xFFFFFFFF
        assert int(backend.movemask(np.full(32, 0x7F, dtype=np.uint8))) == 0

    def test_movemask_single_bits(self, name):
        backend = get_backend(name)
        for i in (0, 15, 16, 31):
            v = np.zeros(32, dtype=np.uint8)
            v[i] = 0xFF
            assert int(backend.movemask(v)) == 1 << i

    def test_movemask_random_vs_oracle(self, name):
        rng = np.random.default_rng(1)
        vs = rng.integers(0, 256, size=(200, 32), dtype=np.uint8)
        masks = get_backend(name).movemask(vs)
        assert masks.dtype == np.uint32
        for v, mask in zip(vs, masks):
            assert int(mask) == sum(1 << i for i in range(32) if v[i] & 0x80)

    def test_accumulate_constant_tables(self, name):
        backend = get_backend(name)
        rng = np.random.default_rng(2)
        blocks = rng.integers(0, 256, size=(3, 5, 16), dtype=np.uint8)
        ones = np.ones((5, 16), dtype=np.uint8)
        assert (backend.accumulate(ones, blocks) == 5).all()
        assert not backend.accumulate(np.zeros((5, 16), dtype=np.uint8), blocks).any()

    def test_accumulate_random_vs_oracle(self, name):
        rng = np.random.default_rng(3)
        lut = rng.integers(0, 256, size=(16, 16), dtype=np.uint8)
        blocks = rng.integers(0, 256, size=(4, 16, 16), dtype=np.uint8)
        acc = get_backend(name).accumulate(lut, blocks)
        assert acc.dtype == np.uint16
        for b in range(4):
            assert acc[b].tolist() == _accumulate_oracle(lut, blocks[b])

    def test_accumulate_at_overflow_limit(self, name):
        lut = np.full((256, 16), 255, dtype=np.uint8)
        blocks = np.zeros((1, 256, 16), dtype=np.uint8)
        acc = get_backend(name).accumulate(lut, blocks)
        assert (acc == 256 * 255).all()


@pytest.mark.parametrize("name", VECTOR_BACKENDS)
def test_vector_backends_match_scalar(name):
    rng = np.random.default_rng(4)
    scalar = get_backend("scalar")
    backend = get_backend(name)
    tables = rng.integers(0, 256, size=(500, 32), dtype=np.uint8)
    idx = rng.integers(0, 256, size=(500, 32), dtype=np.uint8)
    assert np.array_equal(backend.shuffle(tables, idx), scalar.shuffle(tables, idx))
    assert np.array_equal(backend.movemask(tables), scalar.movemask(tables))
    lut = rng.integers(0, 256, size=(32, 16), dtype=np.uint8)
    blocks = rng.integers(0, 256, size=(20, 32, 16), dtype=np.uint8)
    assert np.array_equal(backend.accumulate(lut, blocks), scalar.accumulate(lut, blocks))


def test_accumulate_rejects_too_many_subquantizers():
    with pytest.raises(ArgumentError, match="16-bit"):
        check_accumulate_inputs(
            np.zeros((257, 16), dtype=np.uint8), np.zeros((1, 257, 16), dtype=np.uint8)
        )


def test_accumulate_rejects_mismatched_blocks():
    with pytest.raises(ArgumentError):
        check_accumulate_inputs(np.zeros((4, 16), dtype=np.uint8), np.zeros((1, 3, 16)))
