import pytest

from rupture_bnn.core_math import RandomSource
from rupture_bnn.data import generate_synthetic
from rupture_bnn.pipeline import prepare_and_train

DATA_SEED = 7


@pytest.fixture(scope="session")
def synthetic_table():
    return generate_synthetic(2000, RandomSource(DATA_SEED))


@pytest.fixture(scope="session")
def trained_run(synthetic_table):
    """Default-config model trained on the default synthetic dataset."""
    return prepare_and_train(synthetic_table, seed=DATA_SEED)
