import numpy as np
import pytest

from bipartial.core import DataTable, ProximityTransform, build_store


def line(*xs) -> DataTable:
    """One-dimensional data table from coordinates."""
    return DataTable(np.array(xs, dtype=float)[:, None])


def random_store(n, seed, metric="euclidean", transform=None, dim=2):
    data = DataTable(np.random.default_rng(seed).uniform(size=(n, dim)))
    return build_store(data, metric, transform or ProximityTransform()), data


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
