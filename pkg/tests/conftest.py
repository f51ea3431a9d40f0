import numpy as np
import pytest

import dosebound as db

# Small-scale shared fixtures for unit tests. Acceptance-scale runs live in
# test_acceptance.py with their own session fixtures.

SMALL_CONFIG = db.DensityModelConfig(
    hidden_units=24,
    depth=2,
    n_components=8,
    negative_slope=0.05,
    learning_rate=0.003,
    batch_size=64,
    epochs=80,
    seed=7,
)


@pytest.fixture(scope="session")
def synthetic_data_1k():
    return db.generate(db.SyntheticConfig(n=1000, seed=1331))


@pytest.fixture(scope="session")
def small_model(synthetic_data_1k):
    return db.train(synthetic_data_1k, SMALL_CONFIG)


@pytest.fixture(scope="session")
def small_ensemble(synthetic_data_1k):
    config = db.DensityModelConfig(
        hidden_units=24,
        depth=2,
        n_components=8,
        negative_slope=0.05,
        learning_rate=0.003,
        batch_size=64,
        epochs=40,
        seed=7,
    )
    return db.fit_ensemble(synthetic_data_1k, config, n_b=10, seed=99)
