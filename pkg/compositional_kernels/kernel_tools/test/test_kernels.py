from __future__ import annotations

import math

import numpy as np
import pytest

from compositional_kernels.kernel_tools.core.errors import (
    DimensionMismatch,
    InvalidParameters,
    InvalidWeight,
    NotPSD,
)
from compositional_kernels.kernel_tools.core.schemas import KernelFamily, KernelSpec, WeightMatrix
from compositional_kernels.kernel_tools.services.compdata import barycenter, clr_shifted
from compositional_kernels.kernel_tools.services.kernels import (
    chi_square_kernel,
    closed_form_distance2,
    cross_gram,
    gram,
    hellinger_kernel,
    jensen_shannon_kernel,
    kernel_distance,
    kernel_distance_matrix,
    kernel_eval,
    self_kernel,
    total_variation_kernel,
    weighted_kernel_eval,
)
from compositional_kernels.kernel_tools.services.learn import GENERALIZED_JS_PAIRS, HILBERTIAN_PAIRS, default_grid
from compositional_kernels.kernel_tools.services.weighting import Partition, partition_weights

CATALOG = (
    [KernelSpec.linear(), KernelSpec.rbf(0.3), KernelSpec.aitchison(1e-3), KernelSpec.aitchison_rbf(1e-3, 5.0),
     KernelSpec.heat_diffusion(0.5)]
    + [KernelSpec.generalized_js(a, b) for a, b in GENERALIZED_JS_PAIRS]
    + [KernelSpec.hilbertian(a, b) for a, b in HILBERTIAN_PAIRS]
)
CENTERED = [s for s in CATALOG if s.family in (
    KernelFamily.LINEAR, KernelFamily.GENERALIZED_JS, KernelFamily.HILBERTIAN, KernelFamily.AITCHISON,
)]


def _ids(specs):
    return [s.label for s in specs]


# ---------------------------------------------------------------------------
# Specs
# ---------------------------------------------------------------------------

def test_spec_parameter_validation():
    with pytest.raises(InvalidParameters):
        KernelSpec.rbf(0.0)
    with pytest.raises(InvalidParameters):
        KernelSpec.generalized_js(1.0, 0.25)
    with pytest.raises(InvalidParameters):
        KernelSpec.generalized_js(1.0, 2.0)
    with pytest.raises(InvalidParameters):
        KernelSpec.hilbertian(1.0, 0.5)
    with pytest.raises(InvalidParameters):
        KernelSpec.hilbertian(math.inf, -math.inf)
    with pytest.raises(InvalidParameters):
        KernelSpec.aitchison(-1.0)
    with pytest.raises(InvalidParameters):
        KernelSpec.heat_diffusion(0.0)


def test_spec_record_keeps_infinities():
    spec = KernelSpec.generalized_js(math.inf, 1.0)
    record = spec.to_record()
    assert record["a"] == "inf"
    assert KernelSpec.from_record(record) == spec
    assert spec.label == "generalized_js(a=inf,b=1.0)"
    assert KernelSpec.hilbertian(1.0, -math.inf).label == "hilbertian(a=1.0,b=-inf)"


# ---------------------------------------------------------------------------
# Named special cases
# ---------------------------------------------------------------------------

def test_generalized_js_special_cases(compositions):
    X = compositions(20, 6)
    Y = compositions(20, 6)
    hel = KernelSpec.generalized_js(1.0, 0.5)
    js = KernelSpec.generalized_js(1.0, 1.0)
    # a = inf is the limit of finite a: plain TV, half the closed form usually quoted for this corner
    tv = KernelSpec.generalized_js(math.inf, 1.0)
    for x, y in zip(X, Y):
        assert kernel_eval(hel, x, y) == pytest.approx(math.sqrt(2.0) / 2.0 * hellinger_kernel(x, y), abs=1e-10)
        assert kernel_eval(js, x, y) == pytest.approx(jensen_shannon_kernel(x, y), abs=1e-10)
        assert kernel_eval(tv, x, y) == pytest.approx(total_variation_kernel(x, y), abs=1e-10)


def test_hilbertian_special_cases(compositions):
    X = compositions(20, 6)
    Y = compositions(20, 6)
    chi = KernelSpec.hilbertian(1.0, -1.0)
    # consistent with the continuous a = inf corner above, this lands on 2 x TV rather than the usually quoted TV
    tv = KernelSpec.hilbertian(1.0, -math.inf)
    for x, y in zip(X, Y):
        assert kernel_eval(chi, x, y) == pytest.approx(chi_square_kernel(x, y) / 3.0, abs=1e-10)
        assert kernel_eval(tv, x, y) == pytest.approx(2.0 * total_variation_kernel(x, y), abs=1e-10)


def test_special_cases_handle_zeros():
    x = np.array([0.5, 0.5, 0.0])
    y = np.array([0.0, 0.25, 0.75])
    assert np.isfinite(jensen_shannon_kernel(x, y))
    assert np.isfinite(chi_square_kernel(x, y))
    assert kernel_eval(KernelSpec.generalized_js(1.0, 1.0), x, y) == pytest.approx(jensen_shannon_kernel(x, y), abs=1e-10)
    assert kernel_eval(KernelSpec.hilbertian(1.0, -1.0), x, y) == pytest.approx(chi_square_kernel(x, y) / 3.0, abs=1e-10)


def test_linear_kernel_on_vertices():
    e = np.eye(3)
    assert kernel_eval(KernelSpec.linear(), e[0], e[0]) == pytest.approx(2.0 / 3.0)
    assert kernel_eval(KernelSpec.linear(), e[0], e[1]) == pytest.approx(-1.0 / 3.0)
    K = gram(KernelSpec.linear(), e).entries
    np.testing.assert_allclose(K, np.eye(3) - 1.0 / 3.0, atol=1e-15)


def test_aitchison_is_clr_inner_product(compositions):
    X = compositions(10, 5, zero_fraction=0.2)
    spec = KernelSpec.aitchison(1e-3)
    K = gram(spec, X).entries
    C = clr_shifted(X, 1e-3)
    np.testing.assert_allclose(K, C @ C.T, rtol=1e-10, atol=1e-10)


def test_heat_diagonal_is_prefactor(compositions):
    X = compositions(5, 4)
    spec = KernelSpec.heat_diffusion(0.2)
    expected = (4.0 * math.pi * 0.2) ** (-2.0)
    np.testing.assert_allclose(self_kernel(spec, X), expected, rtol=1e-12)


# ---------------------------------------------------------------------------
# Kernel / distance duality
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("p", [3, 10])
@pytest.mark.parametrize("spec", CATALOG, ids=_ids(CATALOG))
def test_closed_form_distance_matches_kernel(spec, p, compositions):
    X = compositions(8, p)
    Y = compositions(8, p)
    for x, y in zip(X, Y):
        composed = kernel_eval(spec, x, x) + kernel_eval(spec, y, y) - 2.0 * kernel_eval(spec, x, y)
        closed = closed_form_distance2(spec, x, y)
        assert composed == pytest.approx(closed, rel=1e-8, abs=1e-8)
        assert kernel_distance(spec, x, y) == pytest.approx(math.sqrt(max(0.0, closed)), rel=1e-6, abs=1e-6)


def test_rbf_distance_sign():
    x = np.array([0.2, 0.8])
    y = np.array([0.6, 0.4])
    spec = KernelSpec.rbf(0.5)
    expected = 2.0 - 2.0 * math.exp(-0.32 / 1.0)
    assert closed_form_distance2(spec, x, y) == pytest.approx(expected)
    assert kernel_distance(spec, x, y) ** 2 == pytest.approx(expected)


@pytest.mark.parametrize("spec", CENTERED, ids=_ids(CENTERED))
def test_centered_kernels_vanish_at_barycenter(spec, compositions):
    u = barycenter(7)
    for x in compositions(5, 7):
        assert kernel_eval(spec, x, u) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("spec", CATALOG, ids=_ids(CATALOG))
def test_gram_symmetric_and_matches_pointwise(spec, compositions):
    X = compositions(12, 5)
    K = gram(spec, X).entries
    assert np.array_equal(K, K.T)
    for i, j in [(0, 0), (1, 7), (11, 3)]:
        assert K[i, j] == pytest.approx(kernel_eval(spec, X[i], X[j]), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("spec", CATALOG, ids=_ids(CATALOG))
def test_pointwise_symmetry_is_exact(spec, compositions):
    X = compositions(1000, 5, zero_fraction=0.2)
    Y = compositions(1000, 5, zero_fraction=0.2)
    for x, y in zip(X, Y):
        assert kernel_eval(spec, x, y) == kernel_eval(spec, y, x)


@pytest.mark.parametrize("b", [0.5, 1.0, 2.0, 10.0])
def test_infinite_a_branch_is_continuous(b, compositions):
    X = compositions(25, 6)
    Y = compositions(25, 6)
    limit = KernelSpec.generalized_js(math.inf, b)
    near = KernelSpec.generalized_js(1e6, b)
    for x, y in zip(X, Y):
        assert kernel_eval(near, x, y) == pytest.approx(kernel_eval(limit, x, y), abs=1e-4)


@pytest.mark.parametrize("a", [0.75, 1.0, 2.0, 5.0])
def test_equal_exponent_branch_is_continuous(a, compositions):
    X = compositions(25, 6)
    Y = compositions(25, 6)
    equal = KernelSpec.generalized_js(a, a)
    near = KernelSpec.generalized_js(a, a - 1e-6)
    for x, y in zip(X, Y):
        assert kernel_eval(near, x, y) == pytest.approx(kernel_eval(equal, x, y), abs=1e-4)


def test_cross_gram_shapes(compositions):
    X = compositions(7, 4)
    Y = compositions(3, 4)
    spec = KernelSpec.generalized_js(1.0, 0.5)
    C = cross_gram(spec, Y, X)
    assert C.shape == (3, 7)
    np.testing.assert_allclose(C[1], gram(spec, np.vstack([Y[1:2], X])).entries[0, 1:], atol=1e-14)
    assert cross_gram(spec, np.empty((0, 4)), X).shape == (0, 7)
    with pytest.raises(DimensionMismatch):
        cross_gram(spec, compositions(2, 5), X)


def test_kernel_distance_matrix(compositions):
    X = compositions(6, 4)
    spec = KernelSpec.linear()
    D = kernel_distance_matrix(spec, X)
    np.testing.assert_allclose(np.diag(D), 0.0)
    assert D[2, 4] == pytest.approx(np.linalg.norm(X[2] - X[4]), rel=1e-10)


# ---------------------------------------------------------------------------
# Weighted kernels
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("spec", CATALOG, ids=_ids(CATALOG))
def test_identity_weight_reduces_to_unweighted(spec, compositions):
    X = compositions(6, 4)
    weighted = spec.with_weight(WeightMatrix.identity(4))
    np.testing.assert_allclose(gram(weighted, X).entries, gram(spec, X).entries, rtol=1e-10, atol=1e-12)
    assert weighted_kernel_eval(weighted, X[0], X[1]) == pytest.approx(kernel_eval(spec, X[0], X[1]), abs=1e-12)


def test_weighted_eval_needs_weight(compositions):
    X = compositions(2, 3)
    with pytest.raises(InvalidParameters):
        weighted_kernel_eval(KernelSpec.linear(), X[0], X[1])
    with pytest.raises(DimensionMismatch):
        kernel_eval(KernelSpec.linear().with_weight(WeightMatrix.identity(4)), X[0], X[1])


def test_weight_matrix_validation():
    with pytest.raises(InvalidWeight):
        WeightMatrix([[1.0, 0.5], [0.4, 1.0]])
    with pytest.raises(NotPSD) as info:
        WeightMatrix([[1.0, 2.0], [2.0, 1.0]])
    assert info.value.min_eigenvalue == pytest.approx(-1.0)


# ---------------------------------------------------------------------------
# Positive semi-definiteness
# ---------------------------------------------------------------------------

def test_default_grid_grams_are_psd(compositions):
    X = compositions(50, 10)
    grid = default_grid(X)
    assert len(grid.kernels) == 55
    for spec in grid.kernels:
        G = gram(spec, X)
        assert G.is_psd, f"{spec.label}: min eigenvalue {G.min_eig_estimate:.3e}"


PROVEN_WEIGHTED = [
    KernelSpec.linear(),
    KernelSpec.generalized_js(1.0, 0.5),
    KernelSpec.generalized_js(math.inf, 1.0),
    KernelSpec.hilbertian(1.0, -1.0),
    KernelSpec.aitchison(1e-3),
    KernelSpec.rbf(0.2),
]


@pytest.mark.parametrize("spec", PROVEN_WEIGHTED, ids=_ids(PROVEN_WEIGHTED))
def test_partition_weighted_grams_are_psd(spec, compositions):
    X = compositions(30, 6)
    W = partition_weights(Partition(((0, 1, 2), (3, 4), (5,))))
    G = gram(spec.with_weight(W), X)
    assert G.is_psd, f"{spec.label}: min eigenvalue {G.min_eig_estimate:.3e}"
