"""Kernel PCA / MDS and kernel-distance summary statistics."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy.linalg import eigh

from ..core.errors import EmptySubset, InvalidParameters
from ..core.schemas import KernelSpec
from .compdata import as_compositions, barycenter
from .kernels import cross_gram, gram, kernel_distance_matrix, self_kernel

logger = logging.getLogger(__name__)

EIGEN_CUTOFF = 1e-10


# ---------------------------------------------------------------------------
# Kernel PCA
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class KpcaModel:
    train_X: np.ndarray
    spec: KernelSpec
    centered: bool
    eigvals: np.ndarray
    eigvecs: np.ndarray
    embedding: np.ndarray
    requested_components: int
    train_col_means: np.ndarray
    train_mean: float

    @property
    def n_components(self) -> int:
        return int(self.eigvals.shape[0])

    def to_frame(self, sample_ids: Optional[Sequence[str]] = None, Z: Optional[np.ndarray] = None) -> pd.DataFrame:
        Z = self.embedding if Z is None else Z
        ids = list(sample_ids) if sample_ids is not None else [str(i) for i in range(Z.shape[0])]
        frame = pd.DataFrame(Z, columns=[f"pc{r + 1}" for r in range(Z.shape[1])])
        frame.insert(0, "sample_id", ids)
        return frame


def _double_center(K: np.ndarray):
    col = K.mean(axis=0)
    total = float(col.mean())
    return K - col[None, :] - col[:, None] + total, col, total


def kpca_fit(X, spec: KernelSpec, n_components: int, center: bool = True, n_jobs: Optional[int] = None) -> KpcaModel:
    """Eigendecomposition of the (double-centred) Gram; training scores V sqrt(Sigma).

    Components whose eigenvalue is not above 1e-10 * max eigenvalue are
    dropped, so fewer than n_components may be returned. Each eigenvector is
    signed so that its largest-magnitude entry is positive.
    """
    X = np.atleast_2d(as_compositions(X))
    n = X.shape[0]
    if not 1 <= n_components <= n:
        raise InvalidParameters(f"number of components must lie in [1, {n}], got {n_components}")
    K = np.array(gram(spec, X, n_jobs=n_jobs).entries)
    if center:
        K, col, total = _double_center(K)
    else:
        col, total = np.zeros(n), 0.0
    vals, vecs = eigh(K, check_finite=False)
    order = np.argsort(vals)[::-1]
    vals, vecs = np.maximum(vals[order], 0.0), vecs[:, order]
    top = vals[0] if vals.size else 0.0
    keep = int(np.count_nonzero(vals[:n_components] > EIGEN_CUTOFF * top)) if top > 0 else 0
    if keep < n_components:
        logger.warning("kernel PCA: only %d of %d requested components above the eigenvalue cutoff", keep, n_components)
    vals, vecs = vals[:keep], vecs[:, :keep]
    pivots = np.argmax(np.abs(vecs), axis=0)
    signs = np.where(vecs[pivots, np.arange(keep)] < 0, -1.0, 1.0)
    vecs = vecs * signs[None, :]
    Z = K @ vecs / np.sqrt(vals)[None, :]
    return KpcaModel(
        train_X=X,
        spec=spec,
        centered=center,
        eigvals=vals,
        eigvecs=vecs,
        embedding=Z,
        requested_components=n_components,
        train_col_means=col,
        train_mean=total,
    )


def kpca_project(model: KpcaModel, X_new, n_jobs: Optional[int] = None) -> np.ndarray:
    """Scores of new points, centred with the training statistics."""
    K_new = cross_gram(model.spec, X_new, model.train_X, n_jobs=n_jobs)
    if K_new.shape[0] == 0:
        return np.empty((0, model.n_components))
    if model.centered:
        K_new = K_new - model.train_col_means[None, :] - K_new.mean(axis=1, keepdims=True) + model.train_mean
    return K_new @ model.eigvecs / np.sqrt(model.eigvals)[None, :]


def embedding_function(model: KpcaModel):
    """X -> scores, the F used for principal-component contributions."""
    return lambda X: kpca_project(model, X)


# ---------------------------------------------------------------------------
# Summary statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SummaryStat:
    """D(x) = -d_k(x, u)^2 per sample; 0 at the reference, negative elsewhere."""
    reference: np.ndarray
    spec: KernelSpec
    values: np.ndarray

    def to_frame(self, sample_ids: Optional[Sequence[str]] = None) -> pd.DataFrame:
        ids = list(sample_ids) if sample_ids is not None else [str(i) for i in range(self.values.shape[0])]
        return pd.DataFrame({"sample_id": ids, "value": self.values})


def summary_stat(X, spec: KernelSpec, u=None, n_jobs: Optional[int] = None) -> SummaryStat:
    """Closeness to the reference u, the barycentre by default."""
    X = np.atleast_2d(as_compositions(X))
    ref = barycenter(X.shape[1]) if u is None else as_compositions(u)
    if ref.ndim != 1:
        raise InvalidParameters("the reference must be a single composition")
    k_xx = self_kernel(spec, X)
    k_uu = float(self_kernel(spec, ref)[0])
    k_xu = cross_gram(spec, X, ref, n_jobs=n_jobs)[:, 0]
    d2 = k_xx + k_uu - 2.0 * k_xu
    return SummaryStat(reference=ref, spec=spec, values=-np.maximum(d2, 0.0))


def kernel_medoid(X, spec: KernelSpec, subset=None, n_jobs: Optional[int] = None) -> int:
    """Position within the subset of the point with the smallest total kernel distance."""
    X = np.atleast_2d(as_compositions(X))
    rows = _subset_rows(X.shape[0], subset)
    D = kernel_distance_matrix(spec, X[rows], n_jobs=n_jobs)
    return int(np.argmin(D.sum(axis=1)))


def _subset_rows(n: int, subset) -> np.ndarray:
    if subset is None:
        return np.arange(n)
    mask = np.asarray(subset)
    if mask.dtype == bool:
        if mask.shape != (n,):
            raise InvalidParameters(f"subset mask has shape {mask.shape}, expected ({n},)")
        rows = np.flatnonzero(mask)
    else:
        rows = mask.astype(int).ravel()
    if rows.size == 0:
        raise EmptySubset("medoid of an empty subset")
    return rows


def health_scores(X, spec: KernelSpec, subset, n_jobs: Optional[int] = None) -> SummaryStat:
    """Summary statistic against the kernel medoid of a labelled subset."""
    X = np.atleast_2d(as_compositions(X))
    rows = _subset_rows(X.shape[0], subset)
    medoid = int(rows[kernel_medoid(X, spec, rows, n_jobs=n_jobs)])
    logger.info("health-score reference: sample %d (medoid of %d)", medoid, rows.size)
    return summary_stat(X, spec, X[medoid], n_jobs=n_jobs)
