"""Kernel catalog on the simplex.

Every coordinate-sum family (linear, generalized Jensen-Shannon,
Hilbertian) is written through a symmetric coordinate distance delta(s, t)
with delta(s, s) = 0 and the kernel centred at the barycentre u:

    k0(s, t) = -1/2 * [delta(s, t) - (delta(s, u^j) + delta(t, u^j))]
    k(x, y)  = sum_j k0(x^j, y^j)               (unweighted)
    k(x, y)  = sum_{j,l} W_jl k0(x^j, y^l)      (weighted)

so that d^2(x, y) = k(x,x) + k(y,y) - 2k(x,y) = sum_j delta(x^j, y^j).
The remaining families (RBF, Aitchison, Aitchison-RBF, heat diffusion) act
through the Euclidean, log-ratio or spherical representation of the whole
composition.

Generalized-JS branches:
    a < inf, 0.5 <= b < a   ab/(a-b) * (M_a - M_b)       M_r power mean of (s, t)
    a < inf, b = a          M_b * sum_w w log(2w)        w = s^b/(s^b+t^b), t^b/(s^b+t^b)
    a = inf, b < inf        b * (max - M_b)              exact a -> inf limit
    a = b = inf             log 2 * max * 1{s != t}      discontinuous, exact float test
Hilbertian branches:
    a < inf, b > -inf       (2^(1/b) A_a - 2^(1/a) B_b) / (2^(1/a) - 2^(1/b))
    a = inf                 (2^(1/b) max - B_b) / (1 - 2^(1/b))
    b = -inf                (A_a - 2^(1/a) min) / (2^(1/a) - 1)
with A_r = B_r = [s^r + t^r]^(1/r).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterator, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.special import xlogy

from ..core.errors import DimensionMismatch, InvalidParameters, NumericalError
from ..core.schemas import KernelFamily, KernelSpec, SUM_FAMILIES
from ..utils.numerics import extreme_eigenvalues, power_mean, power_sum_root, psd_floor, safe_divide, symmetrize_upper
from .compdata import as_compositions, clr_shifted, require_same_dim

logger = logging.getLogger(__name__)

# floats held by one intermediate block
_BLOCK_BUDGET = 1 << 22
_GRAM_BLOCK_ROWS = 64
_LOG2 = math.log(2.0)


# ---------------------------------------------------------------------------
# Coordinate distances
# ---------------------------------------------------------------------------

def _genjs_equal_exponent(s: np.ndarray, t: np.ndarray, b: float) -> np.ndarray:
    s, t = np.broadcast_arrays(s, t)
    hi = np.maximum(s, t)
    lo = np.minimum(s, t)
    ratio = np.divide(lo, hi, out=np.zeros_like(hi), where=hi > 0)
    with np.errstate(under="ignore"):
        r = ratio ** b
    w_hi = 1.0 / (1.0 + r)
    w_lo = r / (1.0 + r)
    entropy_gap = xlogy(w_hi, 2.0 * w_hi) + xlogy(w_lo, 2.0 * w_lo)
    return power_mean(hi, lo, b) * entropy_gap


def coordinate_distance(spec: KernelSpec, s, t) -> np.ndarray:
    """delta(s, t) of a coordinate-sum family, elementwise with broadcasting."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    fam = spec.family
    if fam == KernelFamily.LINEAR:
        return (s - t) ** 2
    a, b = spec.a, spec.b
    if fam == KernelFamily.GENERALIZED_JS:
        if math.isinf(a) and math.isinf(b):
            return _LOG2 * np.maximum(s, t) * (s != t)
        if math.isinf(a):
            return b * (np.maximum(s, t) - power_mean(s, t, b))
        if b == a:
            return _genjs_equal_exponent(s, t, b)
        return a * b / (a - b) * (power_mean(s, t, a) - power_mean(s, t, b))
    if fam == KernelFamily.HILBERTIAN:
        if math.isinf(a):
            two_b = 2.0 ** (1.0 / b)
            return (two_b * np.maximum(s, t) - power_sum_root(s, t, b)) / (1.0 - two_b)
        two_a = 2.0 ** (1.0 / a)
        if math.isinf(b):
            return (power_sum_root(s, t, a) - two_a * np.minimum(s, t)) / (two_a - 1.0)
        two_b = 2.0 ** (1.0 / b)
        return (two_b * power_sum_root(s, t, a) - two_a * power_sum_root(s, t, b)) / (two_a - two_b)
    raise InvalidParameters(f"{fam.value} is not a coordinate-sum kernel")


# ---------------------------------------------------------------------------
# Block evaluation
# ---------------------------------------------------------------------------

def _pair_blocks(m: int, n: int, per_pair: int) -> Iterator[Tuple[slice, slice]]:
    cols = max(1, min(n, _BLOCK_BUDGET // max(1, per_pair)))
    rows = max(1, _BLOCK_BUDGET // (cols * max(1, per_pair)))
    for i in range(0, m, rows):
        for j in range(0, n, cols):
            yield slice(i, i + rows), slice(j, j + cols)


def _sum_family_block(spec: KernelSpec, A: np.ndarray, B: np.ndarray, W: Optional[np.ndarray]) -> np.ndarray:
    p = A.shape[1]
    u = 1.0 / p
    du_a = coordinate_distance(spec, A, u)
    du_b = coordinate_distance(spec, B, u)
    out = np.empty((A.shape[0], B.shape[0]))
    if W is None:
        for rs, cs in _pair_blocks(A.shape[0], B.shape[0], p):
            d = coordinate_distance(spec, A[rs, None, :], B[None, cs, :])
            out[rs, cs] = -0.5 * np.sum(d - (du_a[rs, None, :] + du_b[None, cs, :]), axis=-1)
        return out
    for rs, cs in _pair_blocks(A.shape[0], B.shape[0], p * p):
        d = coordinate_distance(spec, A[rs, None, :, None], B[None, cs, None, :])
        k0 = -0.5 * (d - (du_a[rs, None, :, None] + du_b[None, cs, None, :]))
        out[rs, cs] = np.einsum("rcjl,jl->rc", k0, W)
    return out


def _squared_distance_block(A: np.ndarray, B: np.ndarray, W: Optional[np.ndarray]) -> np.ndarray:
    """sum_j (a_j - b_j)^2, or sum_{j,l} W_jl (a_j - b_l)^2 when weighted."""
    p = A.shape[1]
    out = np.empty((A.shape[0], B.shape[0]))
    if W is None:
        for rs, cs in _pair_blocks(A.shape[0], B.shape[0], p):
            diff = A[rs, None, :] - B[None, cs, :]
            out[rs, cs] = np.sum(diff * diff, axis=-1)
        return out
    for rs, cs in _pair_blocks(A.shape[0], B.shape[0], p * p):
        diff = A[rs, None, :, None] - B[None, cs, None, :]
        out[rs, cs] = np.einsum("rcjl,jl->rc", diff * diff, W)
    return out


def _inner_product_block(A: np.ndarray, B: np.ndarray, W: Optional[np.ndarray]) -> np.ndarray:
    """sum_j a_j b_j, or a^T W b when weighted."""
    if W is not None:
        A = A @ W
    return A @ B.T


def _heat_prefactor(t: float, p: int) -> float:
    log_pref = -0.5 * p * math.log(4.0 * math.pi * t)
    if log_pref > 700.0:
        raise NumericalError(f"heat-diffusion prefactor (4*pi*t)^(-p/2) overflows for t={t!r}, p={p}")
    return math.exp(log_pref)


def _kernel_block(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """k(A_i, B_j) for all pairs of rows."""
    W = spec.weight.entries if spec.weight is not None else None
    fam = spec.family
    if fam in SUM_FAMILIES:
        return _sum_family_block(spec, A, B, W)
    if fam == KernelFamily.RBF:
        return np.exp(-_squared_distance_block(A, B, W) / (2.0 * spec.sigma2))
    if fam == KernelFamily.AITCHISON:
        return _inner_product_block(clr_shifted(A, spec.c), clr_shifted(B, spec.c), W)
    if fam == KernelFamily.AITCHISON_RBF:
        sq = _squared_distance_block(clr_shifted(A, spec.c), clr_shifted(B, spec.c), W)
        return np.exp(-sq / (2.0 * spec.sigma2))
    if fam == KernelFamily.HEAT_DIFFUSION:
        cos_angle = np.clip(_inner_product_block(np.sqrt(A), np.sqrt(B), W), -1.0, 1.0)
        return _heat_prefactor(spec.t, A.shape[1]) * np.exp(-np.arccos(cos_angle) ** 2 / spec.t)
    raise InvalidParameters(f"unsupported kernel family {fam!r}")


def _prepare(spec: KernelSpec, X, Y=None) -> Tuple[np.ndarray, np.ndarray]:
    A = np.atleast_2d(as_compositions(X))
    B = A if Y is None else np.atleast_2d(as_compositions(Y))
    p = require_same_dim(A, B)
    if spec.weight is not None:
        spec.weight.require_dim(p)
    return A, B


# ---------------------------------------------------------------------------
# Public evaluations
# ---------------------------------------------------------------------------

def kernel_eval(spec: KernelSpec, x, y) -> float:
    """k(x, y) for a single pair of compositions (weighted when spec carries W)."""
    A, B = _prepare(spec, np.atleast_2d(x), np.atleast_2d(y))
    if A.shape[0] != 1 or B.shape[0] != 1:
        raise DimensionMismatch("kernel_eval takes one composition per argument")
    return float(_kernel_block(spec, A, B)[0, 0])


def weighted_kernel_eval(spec: KernelSpec, x, y) -> float:
    if spec.weight is None:
        raise InvalidParameters("weighted_kernel_eval needs a spec carrying a weight matrix")
    return kernel_eval(spec, x, y)


def kernel_distance(spec: KernelSpec, x, y) -> float:
    """sqrt(max(0, k(x,x) + k(y,y) - 2 k(x,y)))."""
    d2 = kernel_eval(spec, x, x) + kernel_eval(spec, y, y) - 2.0 * kernel_eval(spec, x, y)
    return math.sqrt(max(0.0, d2))


def self_kernel(spec: KernelSpec, X) -> np.ndarray:
    """k(x_i, x_i) for every row."""
    A, _ = _prepare(spec, X)
    return np.array([_kernel_block(spec, A[i:i + 1], A[i:i + 1])[0, 0] for i in range(A.shape[0])])


@dataclass(frozen=True, eq=False)
class GramMatrix:
    entries: np.ndarray
    spec: KernelSpec
    min_eig_estimate: float
    max_eig_estimate: float

    @property
    def n(self) -> int:
        return int(self.entries.shape[0])

    @property
    def is_psd(self) -> bool:
        return self.min_eig_estimate >= psd_floor(self.max_eig_estimate)


def gram(spec: KernelSpec, X, n_jobs: Optional[int] = None) -> GramMatrix:
    """Symmetric Gram matrix over the rows of X with an eigenvalue diagnosis.

    Upper-triangle row blocks are evaluated in a thread pool and mirrored,
    so entries[i, j] == entries[j, i] exactly.
    """
    A, _ = _prepare(spec, X)
    n = A.shape[0]
    starts = list(range(0, n, _GRAM_BLOCK_ROWS))
    blocks = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_kernel_block)(spec, A[i:i + _GRAM_BLOCK_ROWS], A[i:]) for i in starts
    )
    K = np.empty((n, n))
    for i, block in zip(starts, blocks):
        K[i:i + block.shape[0], i:] = block
    symmetrize_upper(K)
    if not np.all(np.isfinite(K)):
        raise NumericalError(f"Gram matrix of {spec.label} has non-finite entries")
    lo, hi = extreme_eigenvalues(K)
    if lo < psd_floor(hi):
        logger.debug("Gram of %s not PSD: min eigenvalue %.3e (max %.3e)", spec.label, lo, hi)
    K.setflags(write=False)
    return GramMatrix(entries=K, spec=spec, min_eig_estimate=lo, max_eig_estimate=hi)


def cross_gram(spec: KernelSpec, X_new, X_train, n_jobs: Optional[int] = None) -> np.ndarray:
    """m x n matrix with entry (i, j) = k(X_new[i], X_train[j])."""
    B = np.atleast_2d(as_compositions(X_train))
    new = np.asarray(X_new, dtype=float)
    if new.size == 0:
        return np.empty((0, B.shape[0]))
    A, B = _prepare(spec, new, B)
    starts = list(range(0, A.shape[0], _GRAM_BLOCK_ROWS))
    blocks = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_kernel_block)(spec, A[i:i + _GRAM_BLOCK_ROWS], B) for i in starts
    )
    return np.vstack(blocks)


def kernel_distance_matrix(spec: KernelSpec, X, n_jobs: Optional[int] = None) -> np.ndarray:
    """Pairwise kernel distances d_k(X_i, X_j)."""
    K = gram(spec, X, n_jobs=n_jobs).entries
    diag = np.diag(K)
    d2 = diag[:, None] + diag[None, :] - 2.0 * K
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(np.maximum(d2, 0.0))


# ---------------------------------------------------------------------------
# Closed-form squared distances (independent of the kernel evaluations)
# ---------------------------------------------------------------------------

def closed_form_distance2(spec: KernelSpec, x, y) -> float:
    """The printed d^2 expression of an unweighted family."""
    if spec.weight is not None:
        raise InvalidParameters("closed-form distances cover unweighted kernels only")
    A, B = _prepare(spec, np.atleast_2d(x), np.atleast_2d(y))
    x, y = A[0], B[0]
    p = x.shape[0]
    fam = spec.family
    if fam == KernelFamily.LINEAR:
        return float(np.sum((x - y) ** 2))
    if fam == KernelFamily.RBF:
        return float(2.0 - 2.0 * np.exp(-np.sum((x - y) ** 2) / (2.0 * spec.sigma2)))
    if fam == KernelFamily.AITCHISON:
        return float(np.sum((clr_shifted(x, spec.c) - clr_shifted(y, spec.c)) ** 2))
    if fam == KernelFamily.AITCHISON_RBF:
        sq = np.sum((clr_shifted(x, spec.c) - clr_shifted(y, spec.c)) ** 2)
        return float(2.0 - 2.0 * np.exp(-sq / (2.0 * spec.sigma2)))
    if fam == KernelFamily.HEAT_DIFFUSION:
        angle = np.arccos(min(1.0, float(np.sum(np.sqrt(x * y)))))
        return float(2.0 * _heat_prefactor(spec.t, p) * (1.0 - np.exp(-angle ** 2 / spec.t)))
    a, b = spec.a, spec.b
    hi, lo = np.maximum(x, y), np.minimum(x, y)
    if fam == KernelFamily.GENERALIZED_JS:
        if math.isinf(a) and math.isinf(b):
            return float(np.sum(hi * _LOG2 * (x != y)))
        if math.isinf(a):
            return float(np.sum(b * (hi - 2.0 ** (-1.0 / b) * power_sum_root(x, y, b))))
        if a == b:
            with np.errstate(under="ignore"):
                xb, yb = x ** b, y ** b
            total = xb + yb
            wx, wy = safe_divide(xb, total), safe_divide(yb, total)
            return float(np.sum((total / 2.0) ** (1.0 / b) * (xlogy(wx, 2.0 * wx) + xlogy(wy, 2.0 * wy))))
        num = 2.0 ** (1.0 / b) * power_sum_root(x, y, a) - 2.0 ** (1.0 / a) * power_sum_root(x, y, b)
        return float(a * b / (a - b) * np.sum(num / 2.0 ** (1.0 / a + 1.0 / b)))
    if fam == KernelFamily.HILBERTIAN:
        if math.isinf(a):
            two_b = 2.0 ** (1.0 / b)
            return float(np.sum((two_b * hi - power_sum_root(x, y, b)) / (1.0 - two_b)))
        two_a = 2.0 ** (1.0 / a)
        if math.isinf(b):
            return float(np.sum(power_sum_root(x, y, a) - two_a * lo) / (two_a - 1.0))
        two_b = 2.0 ** (1.0 / b)
        num = two_b * power_sum_root(x, y, a) - two_a * power_sum_root(x, y, b)
        return float(np.sum(num) / (two_a - two_b))
    raise InvalidParameters(f"unsupported kernel family {fam!r}")


# ---------------------------------------------------------------------------
# Named special cases
# ---------------------------------------------------------------------------

def _pair(x, y) -> Tuple[np.ndarray, np.ndarray, float]:
    x = as_compositions(x)
    y = as_compositions(y)
    p = require_same_dim(x, y)
    return x, y, 1.0 / p


def hellinger_kernel(x, y) -> float:
    """sqrt2/4 + sqrt2/4 * sum_j {sqrt(x^j y^j) - (sqrt x^j + sqrt y^j) / sqrt p}."""
    x, y, u = _pair(x, y)
    c = math.sqrt(2.0) / 4.0
    return float(c + c * np.sum(np.sqrt(x * y) - (np.sqrt(x) + np.sqrt(y)) * math.sqrt(u)))


def jensen_shannon_kernel(x, y) -> float:
    x, y, u = _pair(x, y)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = x + y
        terms = (
            xlogy(x, (x + u) / s)
            + xlogy(y, (y + u) / s)
            - u * np.log(4.0 * u * u / ((x + u) * (y + u)))
        )
    return float(-0.25 * np.sum(terms))


def total_variation_kernel(x, y) -> float:
    """-1/4 * sum_j {|x^j - y^j| - |x^j - 1/p| - |y^j - 1/p|}."""
    x, y, u = _pair(x, y)
    return float(-0.25 * np.sum(np.abs(x - y) - np.abs(x - u) - np.abs(y - u)))


def chi_square_kernel(x, y) -> float:
    """-1/2 * sum_j {(x-y)^2/(x+y) - (x-u)^2/(x+u) - (y-u)^2/(y+u)}, 0/0 read as 0."""
    x, y, u = _pair(x, y)
    terms = safe_divide((x - y) ** 2, x + y) - (x - u) ** 2 / (x + u) - (y - u) ** 2 / (y + u)
    return float(-0.5 * np.sum(terms))
