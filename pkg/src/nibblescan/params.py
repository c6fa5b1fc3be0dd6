"""Validated parameter models for training, indexing and search."""

from __future__ import annotations

import math
import re
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, model_validator

MAX_SEED = 2**64 - 1


def parse_synthetic_string(value: str) -> dict[str, int]:
    """
    Parse a synthetic dataset spec of the form ``n,d,clusters``.

    Examples:
        "50000,32,64" -> {"n": 50000, "d": 32, "n_clusters": 64}
        "1000, 8, 10" -> {"n": 1000, "d": 8, "n_clusters": 10}

    Raises:
        ValueError: If format is invalid.
    """
    match = re.match(r"^\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*$", value)
    if not match:
        raise ValueError(f"Invalid synthetic spec: {value!r}. Use format like '50000,32,64'")
    n, d, clusters = (int(group) for group in match.groups())
    return {"n": n, "d": d, "n_clusters": clusters}


class KMeansParams(BaseModel, frozen=True):
    """
    Lloyd's k-means settings.

    Use presets for common budgets:
        KMeansParams.quick(k=16)
        KMeansParams.default(k=16)
        KMeansParams.thorough(k=16)
    """

    model_config = ConfigDict(extra="forbid")

    k: int = Field(ge=1)
    """Number of clusters."""

    iters: int = Field(default=25, ge=1)
    """Lloyd iterations."""

    seed: int = Field(default=0, ge=0, le=MAX_SEED)
    """Key of the Philox generator used for initialization."""

    # --- Presets ---

    @classmethod
    def quick(cls, k: int, seed: int = 0) -> KMeansParams:
        """Short budget for smoke tests."""
        return cls(k=k, iters=10, seed=seed)

    @classmethod
    def default(cls, k: int, seed: int = 0) -> KMeansParams:
        """Typical PQ training budget."""
        return cls(k=k, iters=25, seed=seed)

    @classmethod
    def thorough(cls, k: int, seed: int = 0) -> KMeansParams:
        """Longer budget for coarse quantizers with many lists."""
        return cls(k=k, iters=50, seed=seed)


class SearchParams(BaseModel, frozen=True):
    """Inverted-index search settings. ``nprobe <= nlist`` is checked by the index."""

    model_config = ConfigDict(extra="forbid")

    nprobe: int = Field(default=1, ge=1)
    topk: int = Field(default=1, ge=1)


class IndexParams(BaseModel, frozen=True):
    """Shape of an inverted index: list count, subquantizer count and seed."""

    model_config = ConfigDict(extra="forbid")

    nlist: int = Field(ge=1)
    m: int = Field(ge=1)
    seed: int = Field(default=0, ge=0, le=MAX_SEED)
    kmeans_iters: int = Field(default=25, ge=1)

    @classmethod
    def sqrt_heuristic(cls, n: int, m: int, seed: int = 0) -> IndexParams:
        """Pick ``nlist = round(sqrt(n))``, the usual space-division heuristic."""
        return cls(nlist=max(1, round(math.sqrt(n))), m=m, seed=seed)


class SyntheticSpec(BaseModel, frozen=True):
    """
    Gaussian-mixture dataset description.

    Accepts either keyword fields or the command-line string form:
        SyntheticSpec.model_validate("50000,32,64")
    """

    model_config = ConfigDict(extra="forbid")

    n: int = Field(ge=1)
    d: int = Field(ge=1)
    n_clusters: int = Field(ge=1)
    seed: int = Field(default=0, ge=0, le=MAX_SEED)

    @model_validator(mode="before")
    @classmethod
    def _parse_string(cls, v: Any) -> Any:
        if isinstance(v, str):
            return parse_synthetic_string(v)
        return v

    @model_validator(mode="after")
    def _clusters_fit(self) -> SyntheticSpec:
        if self.n_clusters > self.n:
            raise ValueError(f"n_clusters ({self.n_clusters}) must not exceed n ({self.n})")
        return self

    def with_seed(self, seed: int) -> SyntheticSpec:
        """Return a copy with a different seed."""
        return SyntheticSpec(n=self.n, d=self.d, n_clusters=self.n_clusters, seed=seed)
