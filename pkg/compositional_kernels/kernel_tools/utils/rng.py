"""Seeded random source used by the simulation designs.

A Philox counter-based generator keyed directly by the seed supplies the
uniforms; normals come from the Box-Muller transform of consecutive
uniform pairs (u1 = 1 - U, u2 = U'), cos branch first. Both steps are fully
specified, so a seed fixes every generated dataset on every platform.
"""

from __future__ import annotations

import math
from typing import Sequence, Tuple, Union

import numpy as np

from ..core.errors import InvalidParameters

Shape = Union[int, Tuple[int, ...]]


class CounterRandom:
    def __init__(self, seed: int) -> None:
        if seed < 0:
            raise InvalidParameters(f"seed must be nonnegative, got {seed}")
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def uniform(self, size: Shape) -> np.ndarray:
        return self._gen.random(size)

    def normal(self, size: Shape) -> np.ndarray:
        shape = (size,) if isinstance(size, int) else tuple(size)
        count = int(np.prod(shape)) if shape else 1
        pairs = (count + 1) // 2
        u = self._gen.random(2 * pairs).reshape(pairs, 2)
        radius = np.sqrt(-2.0 * np.log(1.0 - u[:, 0]))
        angle = 2.0 * math.pi * u[:, 1]
        z = np.column_stack((radius * np.cos(angle), radius * np.sin(angle))).ravel()
        return z[:count].reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def multivariate_normal(self, cov: Sequence[Sequence[float]], size: int) -> np.ndarray:
        """Zero-mean rows with covariance ``cov`` through its Cholesky factor."""
        chol = np.linalg.cholesky(np.asarray(cov, dtype=float))
        z = self.normal((size, chol.shape[0]))
        return z @ chol.T
