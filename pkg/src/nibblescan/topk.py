"""Top-k selection shared by every scan."""

from __future__ import annotations

import numpy as np

from nibblescan._types import SearchResult


def select_topk(
    distances: np.ndarray,
    k: int,
    ids: np.ndarray | None = None,
) -> SearchResult:
    """Return the ``k`` smallest distances, ascending, ties broken by lower id.

    ``ids`` defaults to positions. ``k`` larger than the candidate count clamps.
    """
    distances = np.asarray(distances)
    if ids is None:
        ids = np.arange(distances.shape[0], dtype=np.int64)
    else:
        ids = np.asarray(ids, dtype=np.int64)
    n = distances.shape[0]
    k = min(k, n)
    if k <= 0:
        return SearchResult(np.zeros(0, dtype=np.int64), distances[:0].copy())

    if k < n:
        # Everything strictly below the k-th value is in; the boundary value is
        # shared out by id so ties resolve the same way a full sort would.
        kth = np.partition(distances, k - 1)[k - 1]
        below = np.flatnonzero(distances < kth)
        at = np.flatnonzero(distances == kth)
        need = k - below.shape[0]
        at = at[np.argsort(ids[at], kind="stable")[:need]]
        chosen = np.concatenate([below, at])
    else:
        chosen = np.arange(n)

    order = np.lexsort((ids[chosen], distances[chosen]))
    chosen = chosen[order]
    return SearchResult(ids[chosen], distances[chosen])
