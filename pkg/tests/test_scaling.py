from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bergscale.domains import DefiningFunction
from bergscale.scaling import (Cayley, DiagonalStretch, Dilation, ScalingError, ScalingPipeline, Shear, Translation,
                               Unitary, catlin_normalize, hessian_diagonalize, lemma_lower_bound, limit_model,
                               normal_convergence_gap, rescale_multitype, rescale_finite_type, tau_multitype)
from bergscale.domains import drop_to_boundary
from bergscale.wpoly import Multiweight
from conftest import ellipsoid_point, kn_point, random_points, unbalanced_point


def _pipeline():
    U = np.linalg.qr(np.array([[1, 2j], [0.5, -1]]))[0]
    return ScalingPipeline([
        Translation(np.array([0.1, -0.2j, 0.05])),
        Shear(0.5 + 0.1j, {(1, 0): -0.5, (0, 2): 0.25j, (1, 1): 0.1}, 2),
        Dilation(np.array([0.3, 0.7]), 0.01),
        Unitary(U),
        DiagonalStretch(np.array([4.0, 9.0])),
        Cayley(),
    ])


def _numeric_jacobian(f, x, h=1e-6):
    n = x.shape[0]
    J = np.zeros((n, n), dtype=complex)
    for b in range(n):
        e = np.zeros(n)
        e[b] = h
        J[:, b] = (f(x + e) - f(x - e)) / (2 * h)
    return J


coords = st.floats(-0.4, 0.4, allow_nan=False)


@settings(max_examples=40, deadline=None)
@given(st.lists(coords, min_size=6, max_size=6))
def test_pipeline_round_trip(vals):
    pipe = _pipeline()
    x = np.array(vals[:3]) + 1j * np.array(vals[3:])
    y = pipe.apply(x)
    assert np.allclose(pipe.inverse(y), x, atol=1e-12 * max(1.0, np.abs(x).max()))


def test_chain_rule_and_determinant(rng):
    pipe = _pipeline()
    for x in random_points(rng, 4, 3, scale=0.2):
        J = pipe.jacobian_matrix(x)
        num = _numeric_jacobian(lambda p: pipe.apply(p), x)
        assert np.allclose(J, num, rtol=1e-6, atol=1e-6 * np.abs(J).max())
        assert pipe.jacobian_det(x) == pytest.approx(np.linalg.det(J), rel=1e-12)


@pytest.mark.parametrize("stage", [
    Translation(np.array([0.3j, 1.0])),
    Shear(2.0, {(1,): 0.5, (3,): -1j}, 1),
    Dilation(np.array([0.2]), 0.04),
    Unitary(np.array([[1j]])),
    DiagonalStretch(np.array([2.5])),
    Cayley(),
])
def test_stage_round_trip_and_jacobian(stage):
    x = np.array([0.2 - 0.1j, -0.3 + 0.2j])
    assert np.allclose(stage.inverse(stage.apply(x)), x, atol=1e-12)
    J = stage.jacobian(x)
    assert np.allclose(J, _numeric_jacobian(stage.apply, x), rtol=1e-6, atol=1e-8)
    assert stage.jacobian_det(x) == pytest.approx(np.linalg.det(J), rel=1e-12)


def test_cayley_maps_siegel_to_ball(rng):
    z = random_points(rng, 50, 1, scale=0.5)[:, 0]
    w = -np.abs(z) ** 2 - rng.uniform(0.01, 1, 50) + 1j * rng.normal(size=50)
    y = Cayley().apply(np.stack([z, w], axis=1))
    assert np.all(np.linalg.norm(y, axis=1) < 1)
    boundary = np.stack([z, -np.abs(z) ** 2 + 1j * w.imag], axis=1)
    assert np.allclose(np.linalg.norm(Cayley().apply(boundary), axis=1), 1, atol=1e-12)


def test_cayley_pole():
    with pytest.raises(ScalingError):
        Cayley().apply(np.array([0.0, 1.0]))


def test_ellipsoid_shear_and_hessian(ellipsoid_rho):
    res = rescale_multitype(ellipsoid_rho, ellipsoid_point(16))
    shear = res.tangential.stages[1]
    assert shear.coeffs[(1, 0)] == Fraction(-1, 2)
    assert shear.coeffs[(2, 0)] == Fraction(-1, 2)
    assert res.eps == pytest.approx(1 / 256, rel=1e-12)
    assert np.allclose(res.tau, tau_multitype(ellipsoid_point(16)[:2], res.eps, [2, 3]))
    assert np.allclose(res.hessian, np.diag([4, 9]), atol=1e-10)
    assert np.allclose(sorted(res.lambdas), [4, 9])


def test_rescaled_function_has_no_pure_terms(ellipsoid_rho):
    res = rescale_multitype(ellipsoid_rho, ellipsoid_point(64))
    for (p, q), c in res.rho_j.terms.items():
        if not any(q) and not p[-1]:
            assert sum(p) > 2 or abs(complex(c)) < 1e-12


def test_kn_normalization(kn_rho):
    for j in (16, 1024, 2 ** 14):
        eta = kn_point(j)
        res = rescale_finite_type(kn_rho, eta, 8)
        eps = res.eps
        assert res.tau[0] == pytest.approx(abs(eta[0]) * np.sqrt(eps / abs(eta[0]) ** 8), rel=1e-12)
        assert res.hessian[0, 0].real == pytest.approx(31, abs=1e-8)
        assert res.extra["pure_residual"] == 0
        assert res.extra["tau_min"] < res.tau[0]


def test_unbalanced_has_no_linear_shear(unbalanced_rho):
    res = rescale_finite_type(unbalanced_rho, unbalanced_point(1024), 8)
    assert (1,) not in res.extra["d"]
    assert res.hessian[0, 0].real == pytest.approx(9, abs=1e-8)


def test_catlin_coefficients_at_origin(kn_rho):
    cat = catlin_normalize(kn_rho, np.array([0, 0j]), 8)
    assert cat.a[(4, 4)] == pytest.approx(1)
    assert cat.a[(7, 1)] == pytest.approx(15 / 14)
    assert cat.A[8] == pytest.approx(15 / 14)
    with pytest.raises(ScalingError):
        catlin_normalize(kn_rho, np.array([0, 0j]), 8, eps=1e-3)


def test_off_boundary_base_point(kn_rho):
    with pytest.raises(ScalingError):
        catlin_normalize(kn_rho, np.array([0.5, -0.1 + 0j]), 8)


def test_det_formula(ellipsoid_rho):
    res = rescale_multitype(ellipsoid_rho, ellipsoid_point(256))
    x = np.array([0.1, 0.05j, -0.3 + 0.1j])
    x = res.tangential.inverse(x)
    tau, eps = res.tau, res.eps
    lam = np.array(res.lambdas)
    w = res.tangential.apply(x)[-1]
    expected = np.prod(1 / tau) / eps * np.prod(np.sqrt(lam)) * 8 / (1 - w) ** 4 / res.tangential.stages[1].d0
    assert abs(res.full.jacobian_det(x)) == pytest.approx(abs(expected), rel=1e-10)


def test_hessian_diagonalize_order_and_phase():
    A = np.array([[2, 1j], [-1j, 2]])
    U, lam = hessian_diagonalize(A)
    assert np.allclose(lam, [3, 1])
    assert np.allclose(U.conj().T @ A @ U, np.diag(lam), atol=1e-12)
    with pytest.raises(ScalingError):
        hessian_diagonalize(np.array([[1, 0], [0, -1]]))


def test_limit_model_and_gap(ellipsoid_rho):
    res = rescale_multitype(ellipsoid_rho, ellipsoid_point(2 ** 12))
    model = limit_model(np.diag([4.0, 9.0]))
    gap = normal_convergence_gap(res.rho_j, model)
    coarse = normal_convergence_gap(rescale_multitype(ellipsoid_rho, ellipsoid_point(16)).rho_j, model)
    assert 0 < gap < coarse


def test_tau_rejects_normal_sequences():
    with pytest.raises(ScalingError):
        tau_multitype(np.array([0.0]), 0.1, [2])


def test_lemma_bound_positive(ellipsoid_rho):
    eta = ellipsoid_point(1024)
    eps, base = drop_to_boundary(ellipsoid_rho, eta)
    P = ellipsoid_rho.tangential_part
    assert lemma_lower_bound(P, base[:2], eps, Multiweight([2, 3])) >= 1 - 1e-9
