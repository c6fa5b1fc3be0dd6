"""Lloyd's k-means for sub-codebooks and coarse centroids."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from nibblescan._types import VectorSet
from nibblescan.dataset import make_rng
from nibblescan.errors import ArgumentError
from nibblescan.params import KMeansParams

logger = logging.getLogger(__name__)

# Bound on rows x centroids distance entries materialized at once.
_ASSIGN_BLOCK_ELEMENTS = 1 << 22


@dataclass
class KMeansResult:
    """Trained centroids plus the training trace."""

    centroids: VectorSet
    assignments: np.ndarray
    objective_history: list[float] = field(default_factory=list)
    repairs: int = 0

    @property
    def objective(self) -> float:
        return self.objective_history[-1] if self.objective_history else 0.0


def sq_distances(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances ``(n, k)`` in float64."""
    x64 = x.astype(np.float64, copy=False)
    c64 = centroids.astype(np.float64, copy=False)
    dist = (x64 * x64).sum(axis=1)[:, None] - 2.0 * (x64 @ c64.T) + (c64 * c64).sum(axis=1)
    np.maximum(dist, 0.0, out=dist)
    return dist


def _nearest(x: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest centroid index (ties to lower index) and its squared distance."""
    n = x.shape[0]
    labels = np.empty(n, dtype=np.int64)
    best = np.empty(n, dtype=np.float64)
    block = max(1, _ASSIGN_BLOCK_ELEMENTS // max(centroids.shape[0], 1))
    for start in range(0, n, block):
        stop = min(start + block, n)
        dist = sq_distances(x[start:stop], centroids)
        labels[start:stop] = dist.argmin(axis=1)
        best[start:stop] = dist[np.arange(stop - start), labels[start:stop]]
    return labels, best


def _check_dims(centroids: VectorSet, d: int) -> None:
    if centroids.d != d:
        raise ArgumentError(
            f"dimension mismatch: centroids d={centroids.d}, vectors d={d}", "x"
        )


def assign_batch(centroids: VectorSet, x: VectorSet | np.ndarray) -> np.ndarray:
    """Index of the nearest centroid for every row of ``x``."""
    data = x.data if isinstance(x, VectorSet) else np.atleast_2d(np.asarray(x, np.float32))
    if data.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    _check_dims(centroids, data.shape[1])
    return _nearest(data, centroids.data)[0]


def assign(centroids: VectorSet, x: np.ndarray) -> int:
    """``argmin_k ||x - c_k||^2``, ties to the lower index."""
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 1:
        raise ArgumentError(f"expected one vector, got shape {x.shape}", "x")
    _check_dims(centroids, x.shape[0])
    return int(_nearest(x[None, :], centroids.data)[0][0])


def _repair_empty(
    data: np.ndarray,
    centroids: np.ndarray,
    labels: np.ndarray,
    best: np.ndarray,
    counts: np.ndarray,
) -> int:
    """Move every empty centroid onto the point farthest from its own centroid."""
    empty = np.flatnonzero(counts == 0)
    if empty.size == 0:
        return 0
    far = best.copy()
    for c in empty:
        victim = int(np.argmax(far))
        centroids[c] = data[victim]
        counts[labels[victim]] -= 1
        labels[victim] = c
        counts[c] = 1
        far[victim] = -1.0
    logger.warning("Repaired %d empty cluster(s)", empty.size)
    return int(empty.size)


def train_kmeans(data: VectorSet, params: KMeansParams) -> KMeansResult:
    """Run Lloyd's algorithm from a Forgy initialization.

    The objective (sum of squared distances to the nearest centroid) is
    recorded per iteration in float64 and never increases.
    """
    if data.n < params.k:
        raise ArgumentError(f"need at least k={params.k} points, got {data.n}", "data")

    x = data.data
    rng = make_rng(params.seed)
    init = rng.choice(data.n, size=params.k, replace=False)
    init.sort()
    centroids = x[init].astype(np.float64)

    history: list[float] = []
    repairs = 0
    labels = np.zeros(data.n, dtype=np.int64)
    for it in range(params.iters):
        labels, best = _nearest(x, centroids)
        history.append(float(best.sum(dtype=np.float64)))
        logger.debug("k-means iteration %d: objective %.6g", it, history[-1])

        counts = np.bincount(labels, minlength=params.k)
        sums = np.stack(
            [np.bincount(labels, weights=x[:, j], minlength=params.k) for j in range(data.d)],
            axis=1,
        )
        filled = counts > 0
        centroids[filled] = sums[filled] / counts[filled, None]
        repairs += _repair_empty(x, centroids, labels, best, counts)

    centroids32 = centroids.astype(np.float32)
    labels, best = _nearest(x, centroids32)
    counts = np.bincount(labels, minlength=params.k)
    if (counts == 0).any():
        fixed = centroids32.astype(np.float64)
        repairs += _repair_empty(x, fixed, labels, best, counts)
        centroids32 = fixed.astype(np.float32)

    return KMeansResult(
        centroids=VectorSet(centroids32),
        assignments=labels,
        objective_history=history,
        repairs=repairs,
    )


def kmeans(data: VectorSet, params: KMeansParams) -> VectorSet:
    """Train ``params.k`` centroids of dimension ``data.d``."""
    return train_kmeans(data, params).centroids
