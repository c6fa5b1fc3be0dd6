"""Core type definitions for nibblescan."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, NamedTuple

import numpy as np

from nibblescan.errors import ArgumentError


@dataclass(frozen=True, eq=False)
class VectorSet:
    """Dense row-major matrix of ``n`` vectors of dimension ``d`` (float32)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise ArgumentError(f"expected a 2-D array, got shape {data.shape}", "data")
        if data.shape[1] == 0 and data.shape[0] != 0:
            raise ArgumentError("d = 0 is only permitted for an empty set", "data")
        if not np.isfinite(data).all():
            raise ArgumentError("vectors must be finite (no NaN/Inf)", "data")
        data = data.view()
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def empty(cls, d: int = 0) -> VectorSet:
        return cls(np.zeros((0, d), dtype=np.float32))

    @property
    def n(self) -> int:
        return int(self.data.shape[0])

    @property
    def d(self) -> int:
        return int(self.data.shape[1])

    def __len__(self) -> int:
        return self.n

    def row(self, i: int) -> np.ndarray:
        return self.data[i]

    def subset(self, ids: np.ndarray | list[int]) -> VectorSet:
        return VectorSet(self.data[np.asarray(ids, dtype=np.int64)])

    def slice_dims(self, start: int, stop: int) -> VectorSet:
        return VectorSet(self.data[:, start:stop])

    def equals(self, other: VectorSet) -> bool:
        """Bit-exact comparison."""
        return self.data.shape == other.data.shape and self.data.tobytes() == other.data.tobytes()


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Exact nearest-neighbor ids, one row per query, ascending by true distance."""

    ids: np.ndarray

    def __post_init__(self) -> None:
        ids = np.ascontiguousarray(self.ids, dtype=np.int64)
        if ids.ndim != 2:
            raise ArgumentError(f"expected a 2-D id matrix, got shape {ids.shape}", "ids")
        if ids.size and ids.min() < 0:
            raise ArgumentError("ground-truth ids must be non-negative", "ids")
        ids = ids.view()
        ids.setflags(write=False)
        object.__setattr__(self, "ids", ids)

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> GroundTruth:
        return cls(np.asarray(matrix))

    @property
    def nq(self) -> int:
        return int(self.ids.shape[0])

    @property
    def k(self) -> int:
        return int(self.ids.shape[1])


@dataclass(frozen=True, eq=False)
class PQCodes:
    """``n x m`` matrix of codeword indices (uint8)."""

    codes: np.ndarray

    def __post_init__(self) -> None:
        codes = np.asarray(self.codes)
        if codes.ndim != 2:
            raise ArgumentError(f"expected a 2-D code matrix, got shape {codes.shape}", "codes")
        if codes.size and (codes.min() < 0 or codes.max() > 255):
            raise ArgumentError("codes must fit in one byte", "codes")
        codes = np.ascontiguousarray(codes, dtype=np.uint8)
        codes = codes.view()
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)

    @property
    def n(self) -> int:
        return int(self.codes.shape[0])

    @property
    def m(self) -> int:
        return int(self.codes.shape[1])

    def __len__(self) -> int:
        return self.n

    def equals(self, other: PQCodes) -> bool:
        return self.codes.shape == other.codes.shape and bool(
            np.array_equal(self.codes, other.codes)
        )


@dataclass(frozen=True, eq=False)
class LUTf:
    """Float ADC table: ``values[j, t] = ||q_j - c_{j,t}||^2``."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.ascontiguousarray(self.values, dtype=np.float32)
        if values.ndim != 2:
            raise ArgumentError(f"expected an m x k table, got shape {values.shape}", "values")
        if not np.isfinite(values).all() or (values < 0).any():
            raise ArgumentError("table entries must be finite and non-negative", "values")
        values = values.view()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def m(self) -> int:
        return int(self.values.shape[0])

    @property
    def k(self) -> int:
        return int(self.values.shape[1])


class Neighbor(NamedTuple):
    """One ranked search hit."""

    id: int
    distance: float


@dataclass(frozen=True, eq=False)
class SearchResult:
    """Ranked hits of one query: ``ids`` ascending by ``distances``, ties by lower id."""

    ids: np.ndarray
    distances: np.ndarray

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    def __iter__(self):
        for i, dist in zip(self.ids.tolist(), self.distances.tolist()):
            yield Neighbor(int(i), float(dist))

    def neighbors(self) -> list[Neighbor]:
        return list(self)

    def equals(self, other: SearchResult) -> bool:
        return bool(
            np.array_equal(self.ids, other.ids) and np.array_equal(self.distances, other.distances)
        )


@dataclass
class SearchEvent:
    """Structured event emitted during an inverted-index search.

    Event types:
    - "coarse_done": centroid scan finished, ``lists`` holds the probed list ids
    - "lut_built": the query's lookup table was built and quantized
    - "list_scanned": one probed list was scanned, ``count`` vectors
    - "search_done": results merged, ``count`` hits returned
    """

    type: Literal["coarse_done", "lut_built", "list_scanned", "search_done"]
    timestamp: float
    list_id: int | None = None
    count: int | None = None
    lists: list[int] = field(default_factory=list)
    duration_ms: float | None = None
