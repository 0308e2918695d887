from __future__ import annotations

import math

import numpy as np
import pytest

from compositional_kernels.kernel_tools.core.errors import (
    AllPointsIdentical,
    DimensionMismatch,
    FoldTooSmall,
    InvalidParameters,
    NonBinaryLabels,
    SingleClassFold,
)
from compositional_kernels.kernel_tools.core.schemas import KernelFamily, KernelSpec, Task
from compositional_kernels.kernel_tools.services.kernels import gram
from compositional_kernels.kernel_tools.services.learn import (
    FittedModel,
    ParamGrid,
    cross_validate_lambda,
    decision_values,
    default_grid,
    default_lambdas,
    encode_labels,
    fit_krr,
    heat_times,
    median_heuristic,
    predict,
    select_model,
)
from compositional_kernels.kernel_tools.services.simgen import gen_block_lognormal
from compositional_kernels.kernel_tools.services.weighting import Partition, partition_weights


def _toy_regression(compositions, n=40, p=4):
    X = compositions(n, p)
    y = 3.0 * X[:, 0] - 2.0 * X[:, 1]
    return X, y


# ---------------------------------------------------------------------------
# Labels
# ---------------------------------------------------------------------------

def test_encode_labels_sorted_larger_is_positive():
    y, classes = encode_labels(["healthy", "ibd", "ibd", "healthy"])
    assert classes == ("healthy", "ibd")
    np.testing.assert_array_equal(y, [-1, 1, 1, -1])
    with pytest.raises(NonBinaryLabels):
        encode_labels(["a", "b", "c"])
    with pytest.raises(NonBinaryLabels):
        encode_labels(["a", "a"])


# ---------------------------------------------------------------------------
# Kernel ridge
# ---------------------------------------------------------------------------

def test_fit_solves_ridge_system(compositions):
    X, y = _toy_regression(compositions)
    spec = KernelSpec.generalized_js(1.0, 0.5)
    lam = 1e-3
    model = fit_krr(X, y, spec, lam)
    K = gram(spec, X).entries
    n = X.shape[0]
    assert model.intercept == pytest.approx(y.mean())
    np.testing.assert_allclose((K + n * lam * np.eye(n)) @ model.alpha, y - y.mean(), atol=1e-9)
    np.testing.assert_allclose(model(X), y.mean() + K @ model.alpha, atol=1e-10)


def test_small_lambda_interpolates(compositions):
    X, y = _toy_regression(compositions, n=20)
    model = fit_krr(X, y, KernelSpec.rbf(0.01), 1e-10)
    np.testing.assert_allclose(model(X), y, atol=1e-4)


def test_large_lambda_shrinks_to_mean(compositions):
    X, y = _toy_regression(compositions)
    model = fit_krr(X, y, KernelSpec.linear(), 1e8)
    np.testing.assert_allclose(model(X), y.mean(), atol=1e-6)


def test_fit_errors(compositions):
    X, y = _toy_regression(compositions, n=10)
    with pytest.raises(InvalidParameters):
        fit_krr(X, y, KernelSpec.linear(), 0.0)
    with pytest.raises(DimensionMismatch):
        fit_krr(X, y[:-1], KernelSpec.linear(), 1.0)
    with pytest.raises(NonBinaryLabels):
        fit_krr(X, y, KernelSpec.linear(), 1.0, task=Task.CLASSIFICATION)
    model = fit_krr(X, y, KernelSpec.linear(), 1.0)
    with pytest.raises(DimensionMismatch):
        model(compositions(2, 5))
    assert model(np.empty((0, 4))).shape == (0,)


def test_classification_predicts_signs(compositions):
    X = compositions(60, 3)
    labels = np.where(X[:, 0] > X[:, 1], "a", "b")
    y, classes = encode_labels(labels)
    model = fit_krr(X, y, KernelSpec.linear(), 1e-4, task=Task.CLASSIFICATION, classes=classes)
    pred = predict(model, X)
    assert set(np.unique(pred)) <= {-1.0, 1.0}
    assert np.mean(pred == y) > 0.9
    np.testing.assert_array_equal(np.where(decision_values(model, X) >= 0, 1.0, -1.0), pred)


def test_model_file_round_trip(tmp_path, compositions):
    X, y = _toy_regression(compositions, n=15)
    W = partition_weights(Partition(((0, 1), (2, 3))))
    model = fit_krr(X, y, KernelSpec.generalized_js(math.inf, 1.0).with_weight(W), 0.01, feature_names=list("abcd"))
    path = str(tmp_path / "model.json")
    model.save(path)
    again = FittedModel.load(path)
    assert again.spec.family == KernelFamily.GENERALIZED_JS
    assert math.isinf(again.spec.a)
    assert again.spec.is_weighted
    assert again.feature_names == ("a", "b", "c", "d")
    assert again.lam == 0.01
    np.testing.assert_array_equal(again(X), model(X))


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------

def test_default_lambdas():
    lams = default_lambdas()
    assert len(lams) == 40
    assert lams[0] == pytest.approx(1e-5)
    assert lams[-1] == pytest.approx(1e2)


def test_median_heuristic(compositions):
    X = np.array([[0.5, 0.5], [0.25, 0.75], [0.0, 1.0]])
    assert median_heuristic(X) == pytest.approx(0.125)
    with pytest.raises(AllPointsIdentical):
        median_heuristic(np.array([[0.5, 0.5], [0.5, 0.5], [0.5, 0.5]]))


def test_heat_times_follow_sample_size():
    times = heat_times(11)
    assert len(times) == 6
    assert times[0] == pytest.approx(1e-20 ** 0.2 / (4.0 * math.pi))
    assert times[-1] == pytest.approx(10.0 ** 0.2 / (4.0 * math.pi))


def test_default_grid_layout(compositions):
    X = compositions(30, 5, zero_fraction=0.2)
    grid = default_grid(X)
    families = [k.family for k in grid.kernels]
    expected = (
        [KernelFamily.LINEAR] + [KernelFamily.RBF] * 7 + [KernelFamily.GENERALIZED_JS] * 9
        + [KernelFamily.HILBERTIAN] * 8 + [KernelFamily.AITCHISON] * 9 + [KernelFamily.AITCHISON_RBF] * 15
        + [KernelFamily.HEAT_DIFFUSION] * 6
    )
    assert families == expected
    assert len(grid.lambdas) == 40
    shifts = [k.c for k in grid.kernels if k.family == KernelFamily.AITCHISON]
    assert max(shifts) <= 1e-2 + 1e-18
    assert all(b > a for a, b in zip(shifts, shifts[1:]))


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------

def test_cross_validate_lambda_is_deterministic(compositions):
    X, y = _toy_regression(compositions)
    K = gram(KernelSpec.linear(), X).entries
    a = cross_validate_lambda(K, y, default_lambdas(10), 5, seed=3)
    b = cross_validate_lambda(K, y, default_lambdas(10), 5, seed=3)
    assert a == b
    assert a.best_index == int(np.argmin(a.losses))


def test_cross_validate_lambda_fold_errors(compositions):
    X, y = _toy_regression(compositions, n=4)
    K = gram(KernelSpec.linear(), X).entries
    with pytest.raises(FoldTooSmall):
        cross_validate_lambda(K, y, [1.0], n_folds=5)
    with pytest.raises(InvalidParameters):
        cross_validate_lambda(K, y, [1.0], n_folds=1)
    labels = np.array([1.0, 1.0, 1.0, -1.0])
    with pytest.raises(SingleClassFold):
        cross_validate_lambda(K, labels, [1.0], n_folds=2, task=Task.CLASSIFICATION)


# ---------------------------------------------------------------------------
# Hierarchical selection
# ---------------------------------------------------------------------------

SMALL_GRID = ParamGrid(
    kernels=(KernelSpec.linear(), KernelSpec.generalized_js(math.inf, 1.0), KernelSpec.aitchison(1e-3)),
    lambdas=default_lambdas(8),
)


def test_select_model_report(compositions):
    X, y = _toy_regression(compositions, n=30)
    report, model = select_model(X, y, SMALL_GRID, n_outer=3, n_inner=3, seed=7)
    frame = report.to_frame()
    assert list(frame.columns) == ["kernel", "fold", "score", "lambda"]
    assert len(frame) == 3 * 3
    assert report.winner_index == int(np.argmin(report.mean_scores))
    assert model.spec == report.winner
    assert model.lam == report.lam
    assert sorted(np.bincount(report.fold_assignment).tolist()) == [10, 10, 10]


def test_select_model_reproducible(tmp_path, compositions):
    X, y = _toy_regression(compositions, n=30)
    first, _ = select_model(X, y, SMALL_GRID, n_outer=3, n_inner=3, seed=11)
    second, _ = select_model(X, y, SMALL_GRID, n_outer=3, n_inner=3, seed=11, n_jobs=1)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    first.write_csv(str(a))
    second.write_csv(str(b))
    assert a.read_bytes() == b.read_bytes()


def test_select_model_classification(compositions):
    X = compositions(40, 3)
    y, classes = encode_labels(np.where(X[:, 0] > 1.0 / 3.0, "case", "control"))
    report, model = select_model(X, y, SMALL_GRID, n_outer=2, n_inner=2, seed=0, task=Task.CLASSIFICATION, classes=classes)
    assert report.winner_index == int(np.argmax(report.mean_scores))
    assert all(0.0 <= row.score <= 1.0 for row in report.rows)
    assert model.classes == classes


def test_select_model_fold_too_small(compositions):
    X, y = _toy_regression(compositions, n=6)
    with pytest.raises(FoldTooSmall):
        select_model(X, y, SMALL_GRID, n_outer=3, n_inner=5, seed=0)


@pytest.mark.slow
def test_selection_prefers_generating_kernel():
    data = gen_block_lognormal(100, seed=1, noise_sd=0.1)
    grid = ParamGrid(
        kernels=(KernelSpec.linear(), KernelSpec.generalized_js(math.inf, 1.0)),
        lambdas=default_lambdas(),
    )
    report, _ = select_model(data.X, data.y, grid, n_outer=5, n_inner=5, seed=0)
    assert report.winner.family == KernelFamily.GENERALIZED_JS
