import numpy as np
import pytest

from acsel.data import Dataset, PropertySet, Sample


def make_dataset(labeled_y, test_y, d=3, seed=0, prop=None, hidden_test=False):
    """Small dataset with prescribed outcomes and random covariates."""
    rng = np.random.default_rng(seed)
    prop = prop or PropertySet(float("-inf"), 0.0)
    labeled = tuple(Sample(rng.uniform(-1, 1, d), float(y), prop) for y in labeled_y)
    test = tuple(
        Sample(rng.uniform(-1, 1, d), None if hidden_test else float(y), prop) for y in test_y
    )
    return Dataset(labeled, test, d)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
