from __future__ import annotations

import math
from typing import Tuple

import numpy as np
from scipy.linalg import eigvalsh
from scipy.sparse.linalg import eigsh

PSD_TOLERANCE = 1e-8
DENSE_EIGEN_LIMIT = 4096


def power_sum_root(s, t, r: float) -> np.ndarray:
    """[s^r + t^r]^(1/r) for nonnegative s, t, elementwise.

    Evaluated as max * (1 + (min/max)^r)^(1/r) for r > 0 and
    min * (1 + (min/max)^(-r))^(1/r) for r < 0 so no power overflows.
    Zeros follow the limits: 0 when both vanish (r > 0) or when either
    vanishes (r < 0). r = +inf gives max, r = -inf gives min.
    """
    s, t = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
    hi = np.maximum(s, t)
    lo = np.minimum(s, t)
    if math.isinf(r):
        return hi.copy() if r > 0 else lo.copy()
    ratio = np.divide(lo, hi, out=np.zeros_like(hi), where=hi > 0)
    with np.errstate(over="ignore", under="ignore"):
        if r > 0:
            return hi * (1.0 + ratio ** r) ** (1.0 / r)
        return lo * (1.0 + ratio ** (-r)) ** (1.0 / r)


def power_mean(s, t, r: float) -> np.ndarray:
    """((s^r + t^r) / 2)^(1/r); max / min in the infinite limits."""
    if math.isinf(r):
        return power_sum_root(s, t, r)
    return 2.0 ** (-1.0 / r) * power_sum_root(s, t, r)


def safe_divide(num, den) -> np.ndarray:
    """num / den with 0/0 read as 0."""
    num, den = np.broadcast_arrays(np.asarray(num, dtype=float), np.asarray(den, dtype=float))
    return np.divide(num, den, out=np.zeros_like(num), where=den != 0)


def extreme_eigenvalues(m: np.ndarray) -> Tuple[float, float]:
    """(smallest, largest) eigenvalue of a symmetric matrix.

    Dense solve up to DENSE_EIGEN_LIMIT rows, Lanczos estimates beyond.
    """
    n = m.shape[0]
    if n == 0:
        return 0.0, 0.0
    if n <= DENSE_EIGEN_LIMIT:
        w = eigvalsh(m, check_finite=False)
        return float(w[0]), float(w[-1])
    lo = eigsh(m, k=1, which="SA", return_eigenvectors=False)
    hi = eigsh(m, k=1, which="LA", return_eigenvectors=False)
    return float(lo[0]), float(hi[0])


def psd_floor(max_eigenvalue: float) -> float:
    """Smallest eigenvalue still accepted as round-off for a PSD matrix."""
    return -PSD_TOLERANCE * max(1.0, max_eigenvalue)


def symmetrize_upper(m: np.ndarray) -> np.ndarray:
    """Mirror the upper triangle onto the lower one, in place."""
    il = np.tril_indices(m.shape[0], k=-1)
    m[il] = m.T[il]
    return m
