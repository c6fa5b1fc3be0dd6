"""Test k-means training and nearest-centroid assignment."""

import numpy as np
import pytest

from nibblescan._types import VectorSet
from nibblescan.errors import ArgumentError
from nibblescan.kmeans import assign, assign_batch, kmeans, sq_distances, train_kmeans
from nibblescan.params import KMeansParams


def _brute_assign(centroids, x):
    best, best_d = 0, None
    for k, c in enumerate(centroids.astype(np.float64)):
        d = float(((x.astype(np.float64) - c) ** 2).sum())
        if best_d is None or d < best_d:
            best, best_d = k, d
    return best


class TestKMeans:
    def test_k_distinct_points_are_fixed_point(self):
        """k distinct points and k clusters: the centroids are the points."""
        points = np.array([[0.0, 0.0], [5.0, 1.0], [-3.0, 7.0], [2.0, -4.0]])
        result = train_kmeans(VectorSet(points), KMeansParams(k=4, seed=9))
        got = sorted(map(tuple, result.centroids.data.tolist()))
        assert got == sorted(map(tuple, points.tolist()))
        assert result.objective == 0.0

    def test_identical_points_single_cluster(self):
        data = VectorSet(np.full((10, 3), 1.5))
        centroids = kmeans(data, KMeansParams(k=1))
        assert centroids.data.tolist() == [[1.5, 1.5, 1.5]]

    def test_two_blobs(self):
        rng = np.random.default_rng(0)
        sigma = 0.1
        a = rng.normal(0.0, sigma, size=(250, 2))
        b = rng.normal(5.0, sigma, size=(250, 2))
        centroids = kmeans(VectorSet(np.vstack([a, b])), KMeansParams(k=2, seed=1)).data
        means = [a.mean(axis=0), b.mean(axis=0)]
        for mean in means:
            nearest = np.linalg.norm(centroids - mean, axis=1).min()
            assert nearest < 3 * sigma

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        data = VectorSet(rng.random((300, 4)))
        params = KMeansParams(k=8, seed=123)
        assert kmeans(data, params).equals(kmeans(data, params))

    def test_seed_matters(self):
        rng = np.random.default_rng(3)
        data = VectorSet(rng.random((300, 4)))
        a = kmeans(data, KMeansParams(k=8, seed=1))
        b = kmeans(data, KMeansParams(k=8, seed=2))
        assert not a.equals(b)

    def test_objective_non_increasing(self):
        rng = np.random.default_rng(4)
        data = VectorSet(rng.random((1000, 5)))
        history = train_kmeans(data, KMeansParams(k=16, iters=15, seed=0)).objective_history
        assert len(history) == 15
        for before, after in zip(history, history[1:]):
            assert after <= before * (1 + 1e-4)

    def test_no_empty_cluster_after_training(self):
        """Duplicated points force empty clusters, which get repaired."""
        data = VectorSet(np.repeat(np.array([[0.0], [1.0]]), 30, axis=0))
        result = train_kmeans(data, KMeansParams(k=3, iters=5, seed=0))
        counts = np.bincount(result.assignments, minlength=3)
        assert counts.min() >= 1
        assert result.repairs > 0

    def test_too_few_points(self):
        with pytest.raises(ArgumentError):
            kmeans(VectorSet(np.zeros((3, 2))), KMeansParams(k=4))

    def test_output_shape(self):
        rng = np.random.default_rng(5)
        centroids = kmeans(VectorSet(rng.random((100, 6))), KMeansParams.quick(k=7))
        assert (centroids.n, centroids.d) == (7, 6)


class TestAssign:
    def test_exact_centroid(self):
        centroids = VectorSet(np.arange(10, dtype=np.float32).reshape(5, 2))
        assert assign(centroids, np.array([6.0, 7.0])) == 3

    def test_by_inspection(self):
        assert assign(VectorSet(np.array([[0.0], [10.0]])), np.array([4.0])) == 0

    def test_tie_to_lower_index(self):
        assert assign(VectorSet(np.array([[0.0], [2.0]])), np.array([1.0])) == 0

    def test_matches_exhaustive_loop(self):
        rng = np.random.default_rng(6)
        centroids = rng.standard_normal((16, 8)).astype(np.float32)
        xs = rng.standard_normal((200, 8)).astype(np.float32)
        labels = assign_batch(VectorSet(centroids), xs)
        assert labels.tolist() == [_brute_assign(centroids, x) for x in xs]

    def test_scale_consistent(self):
        rng = np.random.default_rng(7)
        centroids = rng.standard_normal((16, 4)).astype(np.float32)
        xs = rng.standard_normal((50, 4)).astype(np.float32)
        base = assign_batch(VectorSet(centroids), xs)
        scaled = assign_batch(VectorSet(centroids * 4), xs * 4)
        assert np.array_equal(base, scaled)

    def test_dimension_mismatch(self):
        with pytest.raises(ArgumentError):
            assign(VectorSet(np.zeros((2, 3))), np.zeros(2))

    def test_batch_empty(self):
        assert assign_batch(VectorSet(np.zeros((2, 3))), VectorSet.empty(3)).shape == (0,)


def test_sq_distances_non_negative():
    x = np.array([[1e4, 1e4]], dtype=np.float32)
    d = sq_distances(x, x)
    assert d[0, 0] >= 0.0
