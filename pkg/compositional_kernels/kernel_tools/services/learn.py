"""Kernel ridge regression / classification and hierarchical model selection.

Ridge system: (K + n * lambda * I) alpha = y - mean(y), intercept = mean(y);
classification runs the same solver on labels encoded as -1 / +1 and
predicts with the sign of the decision value (0 counts as +1).

Model selection follows two steps:
  1. for every kernel, N_out outer folds; on each outer training part an
     N_in-fold CV picks lambda, the refit is scored on the left-out fold
     (MSE for regression, accuracy for classification). Best mean score wins,
     ties go to the earlier grid entry.
  2. an N_in-fold CV on the full data picks the final lambda for the winner,
     which is refitted on everything.
Outer folds depend only on the seed; the inner split of outer fold f uses
seed + 1 + f, the final CV uses the seed itself.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh
from scipy.spatial.distance import pdist
from sklearn.model_selection import KFold, StratifiedKFold

from ..core.errors import (
    AllPointsIdentical,
    DataError,
    DimensionMismatch,
    FoldTooSmall,
    InvalidParameters,
    NonBinaryLabels,
    NumericalError,
    SingleClassFold,
    SolveFailure,
)
from ..core.schemas import FittedModelRecord, KernelSpec, SelectionRow, Task, WeightMatrix
from .compdata import as_compositions, clr_shifted, min_nonzero
from .kernels import cross_gram, gram

logger = logging.getLogger(__name__)

DEFAULT_N_OUTER = 10
DEFAULT_N_INNER = 5
DEFAULT_LAMBDA_RANGE = (1e-5, 1e2)
DEFAULT_N_LAMBDAS = 40
JITTER_SCALE = 1e-10

GENERALIZED_JS_PAIRS: Tuple[Tuple[float, float], ...] = (
    (1.0, 0.5), (1.0, 1.0), (10.0, 0.5), (10.0, 1.0), (10.0, 10.0),
    (math.inf, 0.5), (math.inf, 1.0), (math.inf, 10.0), (math.inf, math.inf),
)
HILBERTIAN_PAIRS: Tuple[Tuple[float, float], ...] = (
    (1.0, -1.0), (1.0, -10.0), (1.0, -math.inf), (10.0, -1.0),
    (10.0, -10.0), (10.0, -math.inf), (math.inf, -1.0), (math.inf, -10.0),
)


# ---------------------------------------------------------------------------
# Labels
# ---------------------------------------------------------------------------

def encode_labels(y: Sequence) -> Tuple[np.ndarray, Tuple[str, str]]:
    """Map two label values onto -1 / +1; the larger (sorted) value becomes +1."""
    values = pd.Series(list(y))
    classes = sorted(values.unique().tolist())
    if len(classes) != 2:
        raise NonBinaryLabels(f"classification needs exactly 2 label values, found {len(classes)}")
    encoded = np.where(values.to_numpy() == classes[1], 1.0, -1.0)
    return encoded, (str(classes[0]), str(classes[1]))


def _sign(decision: np.ndarray) -> np.ndarray:
    return np.where(decision >= 0, 1.0, -1.0)


def _loss(pred: np.ndarray, y: np.ndarray, task: Task) -> np.ndarray:
    """Columnwise loss to minimise: MSE, or 1 - accuracy."""
    if pred.ndim == 1:
        pred = pred[:, None]
    if task == Task.CLASSIFICATION:
        return 1.0 - np.mean(_sign(pred) == y[:, None], axis=0)
    return np.mean((pred - y[:, None]) ** 2, axis=0)


def _score(loss: float, task: Task) -> float:
    return 1.0 - loss if task == Task.CLASSIFICATION else loss


# ---------------------------------------------------------------------------
# Fitted model
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FittedModel:
    """f(x) = intercept + sum_i alpha_i k(X_i, x)."""
    train_X: np.ndarray
    alpha: np.ndarray
    intercept: float
    spec: KernelSpec
    lam: float
    task: Task = Task.REGRESSION
    feature_names: Tuple[str, ...] = ()
    classes: Optional[Tuple[str, str]] = None

    @property
    def p(self) -> int:
        return int(self.train_X.shape[1])

    def decision_function(self, X_new, n_jobs: Optional[int] = None) -> np.ndarray:
        X_new = np.asarray(X_new, dtype=float)
        if X_new.size == 0:
            return np.empty(0)
        X_new = np.atleast_2d(X_new)
        if X_new.shape[1] != self.p:
            raise DimensionMismatch(f"model expects p={self.p} parts, got {X_new.shape[1]}")
        return self.intercept + cross_gram(self.spec, X_new, self.train_X, n_jobs=n_jobs) @ self.alpha

    def __call__(self, X_new) -> np.ndarray:
        return self.decision_function(X_new)

    def to_record(self) -> FittedModelRecord:
        weight = self.spec.weight.entries.tolist() if self.spec.weight is not None else None
        return FittedModelRecord(
            task=self.task,
            spec=self.spec.to_record(),
            lambda_=self.lam,
            intercept=self.intercept,
            alpha=self.alpha.tolist(),
            train_X=self.train_X.tolist(),
            feature_names=list(self.feature_names),
            classes=list(self.classes) if self.classes else None,
            weight=weight,
        )

    @classmethod
    def from_record(cls, record: FittedModelRecord) -> "FittedModel":
        spec = KernelSpec.from_record(record.spec)
        if record.weight is not None:
            spec = spec.with_weight(WeightMatrix(record.weight))
        train_X = np.asarray(record.train_X, dtype=float)
        alpha = np.asarray(record.alpha, dtype=float)
        if alpha.shape[0] != train_X.shape[0]:
            raise DimensionMismatch(f"model file has {alpha.shape[0]} coefficients for {train_X.shape[0]} samples")
        return cls(
            train_X=train_X,
            alpha=alpha,
            intercept=record.intercept,
            spec=spec,
            lam=record.lambda_,
            task=record.task,
            feature_names=tuple(record.feature_names),
            classes=tuple(record.classes) if record.classes else None,
        )

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_record().model_dump_json(by_alias=True, indent=2))
            f.write("\n")

    @classmethod
    def load(cls, path: str) -> "FittedModel":
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
        return cls.from_record(FittedModelRecord.model_validate(payload))


def predict(model: FittedModel, X_new, n_jobs: Optional[int] = None) -> np.ndarray:
    """Regression values, or -1 / +1 labels for a classifier."""
    decision = model.decision_function(X_new, n_jobs=n_jobs)
    if model.task == Task.CLASSIFICATION:
        return _sign(decision)
    return decision


def decision_values(model: FittedModel, X_new, n_jobs: Optional[int] = None) -> np.ndarray:
    """Raw decision values (for ROC curves on classifiers)."""
    return model.decision_function(X_new, n_jobs=n_jobs)


# ---------------------------------------------------------------------------
# Solving
# ---------------------------------------------------------------------------

def _solve_dual(K: np.ndarray, target: np.ndarray, lam: float) -> np.ndarray:
    n = K.shape[0]
    system = K + n * lam * np.eye(n)
    try:
        return cho_solve(cho_factor(system, lower=True, check_finite=False), target, check_finite=False)
    except LinAlgError:
        trace = float(np.trace(K))
        jitter = JITTER_SCALE * (trace / n if trace > 0 else 1.0)
        logger.warning("Cholesky failed for lambda=%g; retrying with jitter %.3e", lam, jitter)
    try:
        return cho_solve(cho_factor(system + jitter * np.eye(n), lower=True, check_finite=False), target, check_finite=False)
    except LinAlgError as err:
        raise SolveFailure(f"ridge system is not positive definite even after jitter {jitter:.3e}") from err


def _check_xy(X, y) -> Tuple[np.ndarray, np.ndarray]:
    X = np.atleast_2d(as_compositions(X))
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"{X.shape[0]} compositions but {y.shape[0]} responses")
    if X.shape[0] < 2:
        raise FoldTooSmall("kernel ridge needs at least 2 samples")
    return X, y


def _check_task_labels(y: np.ndarray, task: Task) -> None:
    if task == Task.CLASSIFICATION and not np.all(np.isin(y, (-1.0, 1.0))):
        raise NonBinaryLabels("classification labels must be encoded as -1 / +1 (see encode_labels)")


def fit_krr(
    X,
    y,
    spec: KernelSpec,
    lam: float,
    task: Task = Task.REGRESSION,
    gram_matrix: Optional[np.ndarray] = None,
    feature_names: Sequence[str] = (),
    classes: Optional[Tuple[str, str]] = None,
    n_jobs: Optional[int] = None,
) -> FittedModel:
    """Kernel ridge fit with intercept mean(y)."""
    X, y = _check_xy(X, y)
    _check_task_labels(y, task)
    if not lam > 0:
        raise InvalidParameters(f"lambda must be positive, got {lam}")
    K = gram(spec, X, n_jobs=n_jobs).entries if gram_matrix is None else gram_matrix
    intercept = float(np.mean(y))
    alpha = _solve_dual(K, y - intercept, lam)
    return FittedModel(
        train_X=X,
        alpha=alpha,
        intercept=intercept,
        spec=spec,
        lam=float(lam),
        task=task,
        feature_names=tuple(feature_names),
        classes=classes,
    )


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParamGrid:
    kernels: Tuple[KernelSpec, ...]
    lambdas: Tuple[float, ...]

    def __len__(self) -> int:
        return len(self.kernels)


def default_lambdas(n: int = DEFAULT_N_LAMBDAS, low: float = DEFAULT_LAMBDA_RANGE[0], high: float = DEFAULT_LAMBDA_RANGE[1]) -> Tuple[float, ...]:
    return tuple(float(v) for v in np.geomspace(low, high, n))


def median_heuristic(X, space: str = "raw", c: Optional[float] = None) -> float:
    """Median pairwise squared Euclidean distance, on raw rows or on clr_shifted(X, c)."""
    arr = np.atleast_2d(np.asarray(X, dtype=float))
    if arr.shape[0] < 2:
        raise DataError("median heuristic needs at least 2 samples")
    if space == "clr":
        if c is None:
            raise InvalidParameters("the clr median heuristic needs a zero shift c")
        arr = clr_shifted(arr, c)
    elif space != "raw":
        raise InvalidParameters(f"unknown space {space!r}; use 'raw' or 'clr'")
    med = float(np.median(pdist(arr, metric="sqeuclidean")))
    if med == 0.0:
        raise AllPointsIdentical(f"median pairwise squared distance is 0 in {space} space")
    return med


def heat_times(n: int, count: int = 6) -> List[float]:
    """t = x^(2/(n-1)) / (4 pi) for log-spaced x in [1e-20, 10]; n is the sample size."""
    exponent = 2.0 / max(1, n - 1)
    return [float(x ** exponent / (4.0 * math.pi)) for x in np.geomspace(1e-20, 10.0, count)]


def aitchison_shifts(X, count: int) -> List[float]:
    half_min = min_nonzero(X) / 2.0
    return [float(v) for v in np.geomspace(half_min * 1e-4, min(half_min * 1e4, 1e-2), count)]


def default_grid(X, n_lambdas: int = DEFAULT_N_LAMBDAS, lambda_range: Tuple[float, float] = DEFAULT_LAMBDA_RANGE) -> ParamGrid:
    """The 55-kernel default grid plus log-spaced ridge penalties."""
    X = np.atleast_2d(as_compositions(X))
    n = X.shape[0]
    kernels: List[KernelSpec] = [KernelSpec.linear()]
    m1 = median_heuristic(X, "raw")
    kernels += [KernelSpec.rbf(m1 * 10.0 ** k) for k in range(-2, 5)]
    kernels += [KernelSpec.generalized_js(a, b) for a, b in GENERALIZED_JS_PAIRS]
    kernels += [KernelSpec.hilbertian(a, b) for a, b in HILBERTIAN_PAIRS]
    kernels += [KernelSpec.aitchison(c) for c in aitchison_shifts(X, 9)]
    for c in aitchison_shifts(X, 5):
        m2 = median_heuristic(X, "clr", c)
        kernels += [KernelSpec.aitchison_rbf(c, c * m2 * f) for f in (0.1, 1.0, 10.0)]
    kernels += [KernelSpec.heat_diffusion(t) for t in heat_times(n)]
    grid = ParamGrid(tuple(kernels), default_lambdas(n_lambdas, *lambda_range))
    logger.info("default grid: %d kernels x %d lambdas (m1=%.4g)", len(grid.kernels), len(grid.lambdas), m1)
    return grid


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------

def _folds(n_splits: int, y: np.ndarray, seed: int, task: Task) -> List[Tuple[np.ndarray, np.ndarray]]:
    if n_splits < 2:
        raise InvalidParameters(f"need at least 2 folds, got {n_splits}")
    if y.shape[0] < n_splits:
        raise FoldTooSmall(f"{y.shape[0]} samples cannot fill {n_splits} folds")
    if task == Task.CLASSIFICATION:
        _, counts = np.unique(y, return_counts=True)
        if counts.size < 2 or counts.min() < n_splits:
            raise SingleClassFold(
                f"stratified {n_splits}-fold split needs at least {n_splits} samples of each class, got {counts.tolist()}"
            )
        splitter = StratifiedKFold(n_splits=n_splits, shuffle=True, random_state=seed)
        return list(splitter.split(np.zeros(y.shape[0]), y))
    splitter = KFold(n_splits=n_splits, shuffle=True, random_state=seed)
    return list(splitter.split(np.zeros(y.shape[0])))


@dataclass(frozen=True)
class LambdaSearch:
    lambdas: Tuple[float, ...]
    losses: Tuple[float, ...]
    best_index: int

    @property
    def best_lambda(self) -> float:
        return self.lambdas[self.best_index]


def cross_validate_lambda(
    K: np.ndarray,
    y,
    lambdas: Sequence[float],
    n_folds: int = DEFAULT_N_INNER,
    seed: int = 0,
    task: Task = Task.REGRESSION,
) -> LambdaSearch:
    """Mean validation loss of every lambda, one eigendecomposition per fold."""
    y = np.asarray(y, dtype=float).ravel()
    lam = np.asarray(lambdas, dtype=float)
    total = np.zeros(lam.shape[0])
    for train, valid in _folds(n_folds, y, seed, task):
        k_tr = K[np.ix_(train, train)]
        y_tr = y[train]
        mean = float(np.mean(y_tr))
        evals, evecs = eigh(k_tr, check_finite=False)
        evals = np.maximum(evals, 0.0)
        proj = evecs.T @ (y_tr - mean)
        coefs = evecs @ (proj[:, None] / (evals[:, None] + train.shape[0] * lam[None, :]))
        pred = mean + K[np.ix_(valid, train)] @ coefs
        total += _loss(pred, y[valid], task)
    losses = total / n_folds
    best = int(np.argmin(losses))
    return LambdaSearch(tuple(float(v) for v in lam), tuple(float(v) for v in losses), best)


# ---------------------------------------------------------------------------
# Hierarchical selection
# ---------------------------------------------------------------------------

@dataclass
class SelectionReport:
    rows: List[SelectionRow]
    kernels: Tuple[KernelSpec, ...]
    mean_scores: Tuple[float, ...]
    winner_index: int
    lam: float
    fold_assignment: np.ndarray
    seed: int
    task: Task
    n_outer: int
    n_inner: int
    notes: List[str] = field(default_factory=list)

    @property
    def winner(self) -> KernelSpec:
        return self.kernels[self.winner_index]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(r.kernel, r.fold, r.score, r.lambda_) for r in self.rows],
            columns=["kernel", "fold", "score", "lambda"],
        )

    def write_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def _evaluate_kernel(
    spec: KernelSpec,
    X: np.ndarray,
    y: np.ndarray,
    outer: List[Tuple[np.ndarray, np.ndarray]],
    lambdas: Sequence[float],
    n_inner: int,
    seed: int,
    task: Task,
) -> List[Tuple[float, float]]:
    """(score, lambda) per outer fold; NaNs when the kernel cannot be evaluated."""
    try:
        K = gram(spec, X, n_jobs=1).entries
    except NumericalError as err:
        logger.warning("skipping %s: %s", spec.label, err)
        return [(math.nan, math.nan)] * len(outer)
    results = []
    for f, (train, test) in enumerate(outer):
        search = cross_validate_lambda(K[np.ix_(train, train)], y[train], lambdas, n_inner, seed + 1 + f, task)
        lam = search.best_lambda
        try:
            k_tr = K[np.ix_(train, train)]
            mean = float(np.mean(y[train]))
            alpha = _solve_dual(k_tr, y[train] - mean, lam)
        except SolveFailure as err:
            logger.warning("%s fold %d: %s", spec.label, f, err)
            results.append((math.nan, lam))
            continue
        pred = mean + K[np.ix_(test, train)] @ alpha
        results.append((_score(float(_loss(pred, y[test], task)[0]), task), lam))
    return results


def select_model(
    X,
    y,
    grid: ParamGrid,
    n_outer: int = DEFAULT_N_OUTER,
    n_inner: int = DEFAULT_N_INNER,
    seed: int = 0,
    task: Task = Task.REGRESSION,
    feature_names: Sequence[str] = (),
    classes: Optional[Tuple[str, str]] = None,
    n_jobs: Optional[int] = None,
) -> Tuple[SelectionReport, FittedModel]:
    """Hierarchical CV over the grid, then the final refit of the winner."""
    X, y = _check_xy(X, y)
    _check_task_labels(y, task)
    if not grid.kernels:
        raise InvalidParameters("the kernel grid is empty")
    if n_inner < 2:
        raise InvalidParameters(f"need at least 2 inner folds, got {n_inner}")
    outer = _folds(n_outer, y, seed, task)
    for train, _ in outer:
        if train.shape[0] < n_inner:
            raise FoldTooSmall(f"outer training part of {train.shape[0]} samples cannot fill {n_inner} inner folds")
    fold_assignment = np.empty(y.shape[0], dtype=int)
    for f, (_, test) in enumerate(outer):
        fold_assignment[test] = f

    per_kernel = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_evaluate_kernel)(spec, X, y, outer, grid.lambdas, n_inner, seed, task) for spec in grid.kernels
    )

    rows: List[SelectionRow] = []
    means: List[float] = []
    for spec, results in zip(grid.kernels, per_kernel):
        for f, (score, lam) in enumerate(results):
            rows.append(SelectionRow(kernel=spec.label, fold=f, score=score, lambda_=lam))
        scores = np.array([s for s, _ in results])
        mean = float(np.mean(scores)) if np.all(np.isfinite(scores)) else math.nan
        means.append(mean)
        logger.debug("%s: mean outer score %.6g", spec.label, mean)

    finite = [i for i, m in enumerate(means) if math.isfinite(m)]
    if not finite:
        raise SolveFailure("no kernel in the grid could be evaluated")
    if task == Task.CLASSIFICATION:
        winner = max(finite, key=lambda i: (means[i], -i))
    else:
        winner = min(finite, key=lambda i: (means[i], i))
    spec = grid.kernels[winner]

    K = gram(spec, X, n_jobs=n_jobs).entries
    final = cross_validate_lambda(K, y, grid.lambdas, n_inner, seed, task)
    model = fit_krr(X, y, spec, final.best_lambda, task, gram_matrix=K, feature_names=feature_names, classes=classes)
    logger.info("selected %s with lambda=%.4g (mean outer score %.6g)", spec.label, final.best_lambda, means[winner])

    report = SelectionReport(
        rows=rows,
        kernels=tuple(grid.kernels),
        mean_scores=tuple(means),
        winner_index=winner,
        lam=final.best_lambda,
        fold_assignment=fold_assignment,
        seed=seed,
        task=task,
        n_outer=n_outer,
        n_inner=n_inner,
        notes=[
            "ridge system (K + n*lambda*I) alpha = y - mean(y)",
            "score: " + ("accuracy" if task == Task.CLASSIFICATION else "mean squared error"),
        ],
    )
    return report, model
