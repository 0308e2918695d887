from __future__ import annotations

import numpy as np
import pytest

from compositional_kernels.kernel_tools.core.errors import EmptySubset, InvalidParameters
from compositional_kernels.kernel_tools.core.schemas import KernelSpec
from compositional_kernels.kernel_tools.services.compdata import barycenter
from compositional_kernels.kernel_tools.services.embed import (
    embedding_function,
    health_scores,
    kernel_medoid,
    kpca_fit,
    kpca_project,
    summary_stat,
)
from compositional_kernels.kernel_tools.services.interpret import pc_contribution

LINE = np.array([[0.1, 0.9], [0.2, 0.8], [0.3, 0.7], [0.8, 0.2], [0.9, 0.1]])


# ---------------------------------------------------------------------------
# Kernel PCA
# ---------------------------------------------------------------------------

def test_linear_kpca_matches_pca(compositions):
    X = compositions(30, 5)
    model = kpca_fit(X, KernelSpec.linear(), 3)
    centered = X - X.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    np.testing.assert_allclose(model.eigvals, sv[:3] ** 2, rtol=1e-9)
    Z = model.embedding
    np.testing.assert_allclose(Z.T @ Z, np.diag(model.eigvals), atol=1e-10)
    np.testing.assert_allclose(np.abs(Z), np.abs(centered @ np.linalg.svd(centered)[2][:3].T), atol=1e-9)


def test_kpca_sign_convention(compositions):
    model = kpca_fit(compositions(20, 4), KernelSpec.generalized_js(1.0, 0.5), 2)
    for r in range(model.n_components):
        v = model.eigvecs[:, r]
        assert v[np.argmax(np.abs(v))] > 0


def test_kpca_projection_of_training_points(compositions):
    X = compositions(25, 4)
    model = kpca_fit(X, KernelSpec.aitchison(1e-3), 2)
    np.testing.assert_allclose(kpca_project(model, X), model.embedding, atol=1e-9)
    assert kpca_project(model, np.empty((0, 4))).shape == (0, 2)
    F = embedding_function(model)
    assert pc_contribution(F, X, 1, 2.0).shape == (4,)


def test_kpca_drops_null_components(compositions):
    X = compositions(10, 3)
    model = kpca_fit(X, KernelSpec.linear(), 3)
    assert model.n_components == 2
    assert model.requested_components == 3
    assert model.embedding.shape == (10, 2)


def test_kpca_component_bounds(compositions):
    X = compositions(5, 3)
    with pytest.raises(InvalidParameters):
        kpca_fit(X, KernelSpec.linear(), 0)
    with pytest.raises(InvalidParameters):
        kpca_fit(X, KernelSpec.linear(), 6)


def test_kpca_frame(compositions):
    model = kpca_fit(compositions(6, 3), KernelSpec.linear(), 2)
    frame = model.to_frame([f"s{i}" for i in range(6)])
    assert list(frame.columns) == ["sample_id", "pc1", "pc2"]
    assert frame["sample_id"].iloc[5] == "s5"


# ---------------------------------------------------------------------------
# Summary statistics
# ---------------------------------------------------------------------------

def test_linear_summary_is_shifted_gini_simpson(compositions):
    p = 6
    X = compositions(15, p)
    stat = summary_stat(X, KernelSpec.linear())
    gini_simpson = 1.0 - np.sum(X ** 2, axis=1)
    np.testing.assert_allclose(stat.values, gini_simpson - (p - 1) / p, atol=1e-12)
    np.testing.assert_allclose(stat.reference, barycenter(p))


def test_summary_is_zero_at_reference(compositions):
    X = compositions(8, 4)
    stat = summary_stat(X, KernelSpec.hilbertian(1.0, -1.0), u=X[3])
    assert stat.values[3] == pytest.approx(0.0, abs=1e-12)
    assert np.all(stat.values <= 0.0)
    frame = stat.to_frame(list("abcdefgh"))
    assert list(frame.columns) == ["sample_id", "value"]


def test_kernel_medoid_on_a_line():
    assert kernel_medoid(LINE, KernelSpec.linear()) == 2
    mask = np.array([True, True, False, False, True])
    assert kernel_medoid(LINE, KernelSpec.linear(), mask) == 1
    assert kernel_medoid(LINE, KernelSpec.linear(), [3, 4, 0]) == 0
    with pytest.raises(EmptySubset):
        kernel_medoid(LINE, KernelSpec.linear(), np.zeros(5, dtype=bool))


def test_health_scores_use_subset_medoid():
    mask = np.array([True, True, False, False, True])
    stat = health_scores(LINE, KernelSpec.linear(), mask)
    np.testing.assert_allclose(stat.reference, LINE[1])
    assert stat.values[1] == pytest.approx(0.0, abs=1e-15)
    assert stat.values[4] == pytest.approx(-2.0 * 0.7 ** 2)
