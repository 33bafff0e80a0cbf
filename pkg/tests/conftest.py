import numpy as np
import pytest

from pilotmatch.core import Dataset
from pilotmatch.datagen import generate, make_spec


@pytest.fixture(scope="session")
def base_dataset():
    """One base-scenario draw shared by read-only tests."""
    return generate(make_spec("base", 0.5), seed=20240101)


@pytest.fixture
def tiny_dataset():
    """Hand-sized dataset: 3 treated, 9 controls, 2 covariates."""
    rng = np.random.default_rng(42)
    X = rng.normal(size=(12, 2))
    T = np.zeros(12, dtype=np.int64)
    T[:3] = 1
    Y = X[:, 0] + rng.normal(size=12)
    return Dataset(X=X, T=T, Y=Y)
