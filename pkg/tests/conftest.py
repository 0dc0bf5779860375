import numpy as np
import pytest

from ntk_influence import Dataset, fit, gram
from ntk_influence.datasets import normalize_rows


@pytest.fixture(scope="session")
def small_data():
    rng = np.random.default_rng(11)
    x = normalize_rows(rng.standard_normal((40, 7)))
    y = rng.uniform(-1.0, 1.0, 40)
    return Dataset(x, y)


@pytest.fixture(scope="session")
def small_kernel(small_data):
    return gram(small_data)


@pytest.fixture(scope="session")
def small_model(small_data, small_kernel):
    return fit(small_kernel, small_data.labels, 0.7)


@pytest.fixture()
def unit_vector():
    def make(d, seed=0):
        rng = np.random.default_rng(seed)
        return normalize_rows(rng.standard_normal((1, d)))[0]

    return make
