"""Configuration for integration tests."""

import pytest

from nibblescan.dataset import gen_dataset, ground_truth
from nibblescan.ivf import train_ivf


def pytest_configure(config):
    """Add integration marker."""
    config.addinivalue_line("markers", "integration: end-to-end tests across modules")


@pytest.fixture(scope="module")
def desk_data():
    """Clustered base and query sets with exact ground truth."""
    base, queries = gen_dataset(5000, 200, 32, 50, 11)
    return base, queries, ground_truth(base, queries, 10)


@pytest.fixture(scope="module")
def desk_index(desk_data):
    base, _, _ = desk_data
    return train_ivf(base, nlist=32, m=8, seed=5, kmeans_iters=10).add(base, base_id=0)
