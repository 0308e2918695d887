"""Model-agnostic interpretation on the simplex.

A predictor is any callable mapping an (n, p) array of compositions to n
reals; FittedModel instances qualify.

CFI (compositional feature influence) of part j is the sample mean of
d/dc f(psi(x, j, c)) at c = 1, estimated by a central difference along the
multiplicative path, which never leaves the simplex. For a smooth f the
values sum to zero because sum_j x^j (e_j - x) = 0.

CPD (compositional feature dependence) of part j at z is the mean of
f(phi(x, j, z)) minus the mean of f(x). Interpreting the CPD therefore
requires caution: pinning one part to z rescales all the others, so a curve
reflects the joint movement of the composition and is only identified where
the data actually support such compositions.

The classical relative influence, permutation importance and partial
dependence ignore the simplex constraint; they are provided for comparison.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..core.errors import (
    CompositionalKernelError,
    InvalidParameters,
    InvalidScale,
    NonpositiveCoordinate,
    NonzeroSum,
    OutOfRange,
    PredictorFailure,
)
from ..utils.rng import CounterRandom
from .compdata import as_compositions, phi, psi

logger = logging.getLogger(__name__)

Predictor = Callable[[np.ndarray], np.ndarray]

DEFAULT_STEP = 1e-5
DEFAULT_CPD_GRID = (0.001, 0.999, 100)
SUM_TOLERANCE = 1e-9


def default_cpd_grid(size: int = DEFAULT_CPD_GRID[2]) -> np.ndarray:
    return np.linspace(DEFAULT_CPD_GRID[0], DEFAULT_CPD_GRID[1], size)


def _evaluate(f: Predictor, X: np.ndarray, rows: np.ndarray, coordinate: Optional[int]) -> np.ndarray:
    """f on a batch, falling back to one row at a time.

    Failures are pinned to the first offending sample.
    """
    try:
        out = np.asarray(f(X), dtype=float).reshape(-1)
        if out.shape[0] == X.shape[0] and np.all(np.isfinite(out)):
            return out
    except Exception:
        logger.debug("batch prediction failed; evaluating %d rows one at a time", X.shape[0])
    collected = np.empty(X.shape[0])
    for k in range(X.shape[0]):
        try:
            value = np.asarray(f(X[k:k + 1]), dtype=float).reshape(-1)
        except Exception as err:
            raise PredictorFailure(int(rows[k]), coordinate, err) from err
        if value.shape != (1,) or not np.isfinite(value[0]):
            raise PredictorFailure(int(rows[k]), coordinate, ArithmeticError(f"predictor returned {value!r}"))
        collected[k] = value[0]
    return collected


def _movable_rows(X: np.ndarray, j: int) -> np.ndarray:
    return np.flatnonzero(X[:, j] != 1.0)


# ---------------------------------------------------------------------------
# CFI
# ---------------------------------------------------------------------------

@dataclass
class CfiVector:
    values: np.ndarray
    skipped: np.ndarray
    feature_names: Tuple[str, ...] = ()

    @property
    def total(self) -> float:
        return float(np.sum(self.values))

    def to_frame(self) -> pd.DataFrame:
        names = self.feature_names or tuple(f"x{j + 1}" for j in range(self.values.shape[0]))
        return pd.DataFrame({"feature": list(names), "value": self.values})

    def write_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def cfi(
    f: Predictor,
    X,
    h: float = DEFAULT_STEP,
    feature_names: Sequence[str] = (),
) -> CfiVector:
    """Mean central-difference derivative of f along psi(., j, c) at c = 1, per part."""
    if not h > 0 or h >= 1:
        raise InvalidScale(f"finite-difference step must lie in (0, 1), got {h}")
    X = np.atleast_2d(as_compositions(X))
    n, p = X.shape
    values = np.full(p, np.nan)
    skipped = np.zeros(p, dtype=int)
    for j in range(p):
        rows = _movable_rows(X, j)
        skipped[j] = n - rows.size
        if rows.size == 0:
            continue
        up = psi(X[rows], j, 1.0 + h)
        down = psi(X[rows], j, 1.0 - h)
        both = _evaluate(f, np.vstack([up, down]), np.concatenate([rows, rows]), j)
        values[j] = float(np.mean((both[: rows.size] - both[rows.size:]) / (2.0 * h)))
    if skipped.any():
        logger.warning("CFI skipped %d sample/part pairs with the full mass on one part", int(skipped.sum()))
    return CfiVector(values=values, skipped=skipped, feature_names=tuple(feature_names))


# ---------------------------------------------------------------------------
# CPD
# ---------------------------------------------------------------------------

@dataclass
class CpdCurve:
    coordinate: int
    grid: np.ndarray
    values: np.ndarray
    feature: str = ""

    def to_frame(self) -> pd.DataFrame:
        name = self.feature or f"x{self.coordinate + 1}"
        return pd.DataFrame({"feature": name, "z": self.grid, "value": self.values})


def cpd(f: Predictor, X, j: int, grid: Optional[Sequence[float]] = None, feature: str = "") -> CpdCurve:
    """Mean effect of pinning part j to each z of the grid."""
    z = default_cpd_grid() if grid is None else np.asarray(grid, dtype=float).ravel()
    if z.size == 0:
        raise InvalidParameters("CPD grid is empty")
    if np.any(z <= 0) or np.any(z >= 1):
        raise OutOfRange("CPD grid values must lie strictly inside (0, 1)")
    if np.any(np.diff(z) <= 0):
        raise InvalidParameters("CPD grid must be strictly increasing")
    X = np.atleast_2d(as_compositions(X))
    rows = np.arange(X.shape[0])
    phi(X, j, float(z[0]))  # DegenerateCoordinate before any evaluation
    base = float(np.mean(_evaluate(f, X, rows, None)))
    values = np.array([float(np.mean(_evaluate(f, phi(X, j, float(v)), rows, j))) - base for v in z])
    return CpdCurve(coordinate=j, grid=z, values=values, feature=feature)


def cpd_frame(curves: Sequence[CpdCurve]) -> pd.DataFrame:
    """Long format (feature, z, value)."""
    return pd.concat([c.to_frame() for c in curves], ignore_index=True)


def write_cpd_csv(curves: Sequence[CpdCurve], path: str) -> None:
    cpd_frame(curves).to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


# ---------------------------------------------------------------------------
# Log-contrast oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LogContrastOracle:
    """f(x) = beta . log x with sum(beta) = 0, and its exact CFI / CPD.

    CFI of part j is beta_j; the CPD of part j is beta_j log(z / (1 - z))
    plus a data-dependent constant, which is 0 when beta_j = 0.
    """
    beta: np.ndarray

    def __call__(self, X) -> np.ndarray:
        arr = np.atleast_2d(np.asarray(X, dtype=float))
        if arr.shape[1] != self.beta.shape[0]:
            raise InvalidParameters(f"oracle has {self.beta.shape[0]} coefficients, data have {arr.shape[1]} parts")
        if np.any(arr <= 0):
            raise NonpositiveCoordinate("log-contrast predictor needs strictly positive coordinates")
        return np.log(arr) @ self.beta

    def cfi(self) -> np.ndarray:
        return self.beta.copy()

    def cpd(self, j: int, grid: Optional[Sequence[float]] = None) -> np.ndarray:
        """Closed-form curve up to its additive constant."""
        z = default_cpd_grid() if grid is None else np.asarray(grid, dtype=float)
        return self.beta[j] * np.log(z / (1.0 - z))


def log_contrast_oracle(beta: Sequence[float]) -> LogContrastOracle:
    coef = np.array(beta, dtype=float)
    if coef.ndim != 1 or coef.size < 2:
        raise InvalidParameters("beta must be a vector with at least 2 entries")
    if abs(coef.sum()) > SUM_TOLERANCE * max(1.0, float(np.abs(coef).max())):
        raise NonzeroSum(f"log-contrast coefficients must sum to 0, got {coef.sum()!r}")
    coef.setflags(write=False)
    return LogContrastOracle(coef)


# ---------------------------------------------------------------------------
# Principal-component contributions
# ---------------------------------------------------------------------------

def pc_contribution(F: Callable[[np.ndarray], np.ndarray], X, r: int, c: float) -> np.ndarray:
    """Mean change of component r when part j is scaled by c, for every part j."""
    if not c > 0:
        raise InvalidScale(f"perturbation scale must be positive, got {c}")
    X = np.atleast_2d(as_compositions(X))
    n, p = X.shape
    base = np.asarray(F(X), dtype=float)
    if base.ndim != 2 or not 0 <= r < base.shape[1]:
        raise InvalidParameters(f"component {r} not available in an embedding of shape {base.shape}")
    out = np.zeros(p)
    skipped = 0
    for j in range(p):
        rows = _movable_rows(X, j)
        skipped += n - rows.size
        if rows.size == 0:
            continue
        try:
            moved = np.asarray(F(psi(X[rows], j, c)), dtype=float)[:, r]
        except CompositionalKernelError:
            raise
        except Exception as err:
            raise PredictorFailure(int(rows[0]), j, err) from err
        out[j] = float(np.mean(moved - base[rows, r]))
    if skipped:
        logger.warning("PC contributions skipped %d sample/part pairs with the full mass on one part", skipped)
    return out


# ---------------------------------------------------------------------------
# Classical importance measures
# ---------------------------------------------------------------------------

def relative_influence(f: Predictor, X, h: float = DEFAULT_STEP) -> np.ndarray:
    """Mean partial derivative per coordinate, moving off the simplex."""
    arr = np.atleast_2d(np.asarray(X, dtype=float))
    rows = np.arange(arr.shape[0])
    out = np.zeros(arr.shape[1])
    for j in range(arr.shape[1]):
        up = arr.copy()
        down = arr.copy()
        up[:, j] += h
        down[:, j] -= h
        out[j] = float(np.mean((_evaluate(f, up, rows, j) - _evaluate(f, down, rows, j)) / (2.0 * h)))
    return out


def permutation_importance(
    f: Predictor,
    X,
    y: Optional[Sequence[float]] = None,
    n_repeats: int = 10,
    seed: int = 0,
) -> np.ndarray:
    """Mean increase in squared error after permuting one column, no refit.

    Without y the predictor's own outputs are the targets, so the baseline
    error is 0.
    """
    arr = np.atleast_2d(np.asarray(X, dtype=float))
    rows = np.arange(arr.shape[0])
    base_pred = _evaluate(f, arr, rows, None)
    target = base_pred if y is None else np.asarray(y, dtype=float)
    baseline = float(np.mean((base_pred - target) ** 2))
    rng = CounterRandom(seed)
    out = np.zeros(arr.shape[1])
    for j in range(arr.shape[1]):
        total = 0.0
        for _ in range(n_repeats):
            shuffled = arr.copy()
            shuffled[:, j] = arr[rng.permutation(arr.shape[0]), j]
            total += float(np.mean((_evaluate(f, shuffled, rows, j) - target) ** 2)) - baseline
        out[j] = total / n_repeats
    return out


@dataclass
class PartialDependence:
    coordinate: int
    grid: np.ndarray
    values: np.ndarray


def partial_dependence(f: Predictor, X, j: int, grid: Optional[Sequence[float]] = None) -> PartialDependence:
    """Mean of f with column j set to z and the other columns untouched."""
    arr = np.atleast_2d(np.asarray(X, dtype=float))
    z = default_cpd_grid() if grid is None else np.asarray(grid, dtype=float).ravel()
    rows = np.arange(arr.shape[0])
    values = []
    for v in z:
        moved = arr.copy()
        moved[:, j] = v
        values.append(float(np.mean(_evaluate(f, moved, rows, j))))
    return PartialDependence(coordinate=j, grid=z, values=np.array(values))
