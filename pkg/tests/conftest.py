"""Shared desk-scale fixtures: datasets and trained models reused across files."""

import pytest

from advdesk import data, nn

MOONS_SEED = 7
DIGITS_SEED = 11


@pytest.fixture(scope="session")
def moons_train():
    return data.gen_moons(500, 0.1, MOONS_SEED)


@pytest.fixture(scope="session")
def moons_test():
    # independent draw for held-out evaluation
    return data.gen_moons(300, 0.1, MOONS_SEED + 1)


@pytest.fixture(scope="session")
def moons_model(moons_train):
    model0 = nn.init_model((2, 16, 16, 2), seed=MOONS_SEED)
    model, _ = nn.train_sgd(model0, moons_train, epochs=200, lr=0.5, batch_size=32, seed=MOONS_SEED)
    return model


@pytest.fixture(scope="session")
def digits_train():
    return data.gen_digits8x8(400, DIGITS_SEED)


@pytest.fixture(scope="session")
def digits_test():
    return data.gen_digits8x8(200, DIGITS_SEED + 1)


@pytest.fixture(scope="session")
def digits_model(digits_train):
    model0 = nn.init_model((64, 32, 10), seed=DIGITS_SEED)
    model, _ = nn.train_sgd(model0, digits_train, epochs=150, lr=0.5, batch_size=32, seed=DIGITS_SEED)
    return model
