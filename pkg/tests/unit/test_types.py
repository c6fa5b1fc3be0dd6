"""Test core value types."""

import time

import numpy as np
import pytest

from nibblescan._types import (
    GroundTruth,
    LUTf,
    Neighbor,
    PQCodes,
    SearchEvent,
    SearchResult,
    VectorSet,
)
from nibblescan.errors import ArgumentError


class TestVectorSet:
    def test_shape_and_dtype(self):
        vs = VectorSet(np.arange(6, dtype=np.float64).reshape(3, 2))
        assert vs.n == 3
        assert vs.d == 2
        assert len(vs) == 3
        assert vs.data.dtype == np.float32

    def test_read_only(self):
        vs = VectorSet(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            vs.data[0, 0] = 1.0

    def test_does_not_freeze_callers_array(self):
        raw = np.zeros((2, 2), dtype=np.float32)
        VectorSet(raw)
        raw[0, 0] = 1.0
        assert raw[0, 0] == 1.0

    def test_empty(self):
        assert VectorSet.empty().n == 0
        assert VectorSet.empty(4).d == 4

    def test_zero_dimension_needs_empty_set(self):
        with pytest.raises(ArgumentError):
            VectorSet(np.zeros((3, 0)))

    def test_rejects_non_finite(self):
        with pytest.raises(ArgumentError, match="finite"):
            VectorSet(np.array([[1.0, np.nan]]))

    def test_rejects_1d(self):
        with pytest.raises(ArgumentError):
            VectorSet(np.zeros(4))

    def test_subset_and_slice(self):
        vs = VectorSet(np.arange(12).reshape(4, 3))
        assert vs.subset([3, 1]).data.tolist() == [[9, 10, 11], [3, 4, 5]]
        assert vs.slice_dims(1, 3).data.tolist() == [[1, 2], [4, 5], [7, 8], [10, 11]]

    def test_equals_is_bit_exact(self):
        a = VectorSet(np.array([[0.0, 1.0]]))
        b = VectorSet(np.array([[-0.0, 1.0]]))
        assert a.equals(VectorSet(np.array([[0.0, 1.0]])))
        assert not a.equals(b)


class TestGroundTruth:
    def test_from_matrix(self):
        gt = GroundTruth.from_matrix(np.array([[3, 1], [0, 2]], dtype=np.int32))
        assert gt.nq == 2
        assert gt.k == 2
        assert gt.ids.dtype == np.int64

    def test_negative_ids_rejected(self):
        with pytest.raises(ArgumentError):
            GroundTruth(np.array([[-1]]))


class TestPQCodes:
    def test_codes_are_bytes(self):
        codes = PQCodes(np.array([[1, 15], [0, 255]]))
        assert codes.codes.dtype == np.uint8
        assert (codes.n, codes.m) == (2, 2)

    def test_out_of_byte_range(self):
        with pytest.raises(ArgumentError):
            PQCodes(np.array([[256]]))

    def test_equals(self):
        assert PQCodes(np.array([[1, 2]])).equals(PQCodes(np.array([[1, 2]], dtype=np.uint8)))
        assert not PQCodes(np.array([[1, 2]])).equals(PQCodes(np.array([[2, 1]])))


class TestLUTf:
    def test_shape(self):
        lut = LUTf(np.ones((4, 16)))
        assert (lut.m, lut.k) == (4, 16)
        assert lut.values.dtype == np.float32

    def test_negative_rejected(self):
        with pytest.raises(ArgumentError):
            LUTf(np.array([[-1.0, 0.0]]))


class TestSearchResult:
    def test_iterates_neighbors(self):
        result = SearchResult(np.array([4, 2]), np.array([0.5, 1.5]))
        assert len(result) == 2
        assert result.neighbors() == [Neighbor(4, 0.5), Neighbor(2, 1.5)]
        first = next(iter(result))
        assert first.id == 4
        assert first.distance == 0.5

    def test_equals(self):
        a = SearchResult(np.array([1]), np.array([0.0]))
        assert a.equals(SearchResult(np.array([1]), np.array([0.0])))
        assert not a.equals(SearchResult(np.array([2]), np.array([0.0])))


def test_search_event_defaults():
    """SearchEvent carries only the fields relevant to its type."""
    event = SearchEvent(type="lut_built", timestamp=time.time())
    assert event.list_id is None
    assert event.count is None
    assert event.lists == []
    assert event.duration_ms is None


def test_search_event_list_scanned():
    event = SearchEvent(type="list_scanned", timestamp=time.time(), list_id=3, count=40)
    assert event.list_id == 3
    assert event.count == 40
