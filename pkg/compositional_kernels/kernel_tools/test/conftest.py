from __future__ import annotations

import numpy as np
import pytest


def random_compositions(rng: np.random.Generator, n: int, p: int, zero_fraction: float = 0.0) -> np.ndarray:
    """Dirichlet(1) rows; optionally zero out entries (never a whole row)."""
    X = rng.dirichlet(np.ones(p), size=n)
    if zero_fraction > 0:
        mask = rng.random((n, p)) < zero_fraction
        mask[np.arange(n), rng.integers(0, p, n)] = False
        X = np.where(mask, 0.0, X)
        X = X / X.sum(axis=1, keepdims=True)
    return X


def lognormal_compositions(rng: np.random.Generator, n: int, p: int) -> np.ndarray:
    Z = np.exp(rng.standard_normal((n, p)))
    return Z / Z.sum(axis=1, keepdims=True)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def compositions(rng):
    def make(n: int, p: int, zero_fraction: float = 0.0) -> np.ndarray:
        return random_compositions(rng, n, p, zero_fraction)
    return make


@pytest.fixture
def lognormal(rng):
    def make(n: int, p: int) -> np.ndarray:
        return lognormal_compositions(rng, n, p)
    return make
