"""Compositional core: simplex validation, the two simplex perturbations and
the zero-shifted centred log-ratio.

All functions take a single composition (1-D array) or a batch of them
(2-D array, one composition per row) and return fresh arrays. Coordinates
are 0-based.
"""

from __future__ import annotations

from typing import Union

import numpy as np

from ..core.errors import (
    DegenerateCoordinate,
    DimensionMismatch,
    InvalidComposition,
    InvalidScale,
    NonpositiveEntry,
    NonpositiveShift,
    OutOfRange,
)

SIMPLEX_TOL = 1e-9

ArrayLike = Union[np.ndarray, list, tuple]


# ---------------------------------------------------------------------------
# Construction / validation
# ---------------------------------------------------------------------------

def closure(counts: ArrayLike) -> np.ndarray:
    """Divide each row of nonnegative counts by its total."""
    mat = np.array(counts, dtype=float, copy=True)
    if mat.ndim not in (1, 2):
        raise InvalidComposition(f"expected a vector or matrix, got {mat.ndim} dimensions")
    if not np.all(np.isfinite(mat)):
        raise InvalidComposition("counts contain non-finite values")
    if np.any(mat < 0):
        raise InvalidComposition("counts contain negative values")
    totals = mat.sum(axis=-1, keepdims=True)
    if np.any(totals <= 0):
        bad = int(np.flatnonzero(totals.ravel() <= 0)[0])
        raise InvalidComposition(f"row {bad} sums to zero")
    return mat / totals


def as_compositions(x: ArrayLike) -> np.ndarray:
    """Validate points of the simplex, renormalising sums within SIMPLEX_TOL.

    Accepts one composition or a batch; the shape is kept.
    """
    mat = np.array(x, dtype=float, copy=True)
    if mat.ndim not in (1, 2):
        raise InvalidComposition(f"expected a vector or matrix, got {mat.ndim} dimensions")
    if mat.shape[-1] < 2:
        raise InvalidComposition(f"compositions need at least 2 parts, got {mat.shape[-1]}")
    if not np.all(np.isfinite(mat)):
        raise InvalidComposition("composition contains non-finite values")
    if np.any(mat < 0):
        raise InvalidComposition("composition contains negative values")
    totals = mat.sum(axis=-1, keepdims=True)
    off = np.abs(totals - 1.0) > SIMPLEX_TOL
    if np.any(off):
        bad = int(np.flatnonzero(off.ravel())[0])
        raise InvalidComposition(f"row {bad} sums to {float(totals.ravel()[bad])!r}, not 1")
    return mat / totals


def barycenter(p: int) -> np.ndarray:
    """The most diverse point u = (1/p, ..., 1/p)."""
    return np.full(p, 1.0 / p)


def require_same_dim(x: np.ndarray, y: np.ndarray) -> int:
    if x.shape[-1] != y.shape[-1]:
        raise DimensionMismatch(f"compositions have {x.shape[-1]} and {y.shape[-1]} parts")
    return int(x.shape[-1])


def _check_coordinate(x: np.ndarray, j: int) -> None:
    p = x.shape[-1]
    if not 0 <= j < p:
        raise IndexError(f"coordinate {j} out of range for p={p}")


def _first_full_mass(col: np.ndarray) -> int:
    hits = np.flatnonzero(np.atleast_1d(col) == 1.0)
    return int(hits[0]) if hits.size else -1


# ---------------------------------------------------------------------------
# Perturbations
# ---------------------------------------------------------------------------

def psi(x: ArrayLike, j: int, c: float) -> np.ndarray:
    """Multiplicative perturbation: scale part j by c and close again.

    psi(x, j, c) = s_c * (x^1, ..., c x^j, ..., x^p) with
    s_c = 1 / (sum_{l != j} x^l + c x^j).
    """
    arr = np.asarray(x, dtype=float)
    _check_coordinate(arr, j)
    if c < 0:
        raise InvalidScale(f"perturbation scale must be nonnegative, got {c}")
    bad = _first_full_mass(arr[..., j])
    if bad >= 0:
        raise DegenerateCoordinate(j, bad if arr.ndim == 2 else None)
    out = np.array(arr, dtype=float, copy=True)
    out[..., j] *= c
    return out / out.sum(axis=-1, keepdims=True)


def phi(x: ArrayLike, j: int, c: float) -> np.ndarray:
    """Fixed-coordinate perturbation: pin part j to c, rescale the rest to 1 - c."""
    arr = np.asarray(x, dtype=float)
    _check_coordinate(arr, j)
    if not 0.0 <= c <= 1.0:
        raise OutOfRange(f"pinned value must lie in [0, 1], got {c}")
    rest = arr.sum(axis=-1) - arr[..., j]
    bad = _first_full_mass(np.where(np.atleast_1d(rest) > 0, 0.0, 1.0))
    if bad >= 0:
        raise DegenerateCoordinate(j, bad if arr.ndim == 2 else None)
    scale = (1.0 - c) / rest
    out = arr * np.expand_dims(scale, -1)
    out[..., j] = c
    return out


def psi_tangent(x: ArrayLike, j: int) -> np.ndarray:
    """d/dc psi(x, j, c) at c = 1, i.e. x^j (e_j - x)."""
    arr = np.asarray(x, dtype=float)
    _check_coordinate(arr, j)
    e = np.zeros(arr.shape[-1])
    e[j] = 1.0
    return np.expand_dims(arr[..., j], -1) * (e - arr)


# ---------------------------------------------------------------------------
# Log-ratio geometry
# ---------------------------------------------------------------------------

def geometric_mean(v: ArrayLike) -> Union[float, np.ndarray]:
    """(prod v_j)^(1/p), computed as exp(mean(log v)); rowwise for matrices."""
    arr = np.asarray(v, dtype=float)
    if np.any(arr <= 0):
        raise NonpositiveEntry("geometric mean needs strictly positive entries")
    g = np.exp(np.mean(np.log(arr), axis=-1))
    return float(g) if arr.ndim == 1 else g


def clr_shifted(x: ArrayLike, c: float) -> np.ndarray:
    """log((x^j + c) / g(x + c)) per part; rows sum to 0."""
    if not c > 0:
        raise NonpositiveShift(f"zero shift must be positive, got {c}")
    logs = np.log(np.asarray(x, dtype=float) + c)
    return logs - logs.mean(axis=-1, keepdims=True)


def min_nonzero(x: ArrayLike) -> float:
    """Smallest strictly positive entry of a data matrix."""
    arr = np.asarray(x, dtype=float)
    pos = arr[arr > 0]
    if pos.size == 0:
        raise InvalidComposition("data has no positive entry")
    return float(pos.min())
