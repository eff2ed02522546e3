import math

import numpy as np
import pytest

from bergscale import _backend, _fallback
from bergscale.bergman import (ClosedFormBall, GramSampled, KernelError, RejectionSampler, ReinhardtSeries,
                               ball_kernel_diag, ellipsoid_transport_engine, reinhardt_norm,
                               reinhardt_norm_quadrature, transport_kernel)
from bergscale.domains import ModelDomain
from bergscale.scaling import Cayley
from conftest import random_points


@pytest.mark.parametrize("N", [1, 2, 3])
def test_ball_kernel_at_center(N):
    assert ball_kernel_diag(N, np.zeros(N)) == pytest.approx(math.factorial(N) / math.pi ** N)
    assert ClosedFormBall(N).kernel_diag(np.zeros(N)) == pytest.approx(math.factorial(N) / math.pi ** N)


def test_ball_kernel_rejects_outside():
    with pytest.raises(KernelError):
        ball_kernel_diag(2, np.array([1.0, 0.0]))


@pytest.mark.parametrize("p,k", [((1, 1), (0, 0)), ((1, 1), (2, 1)), ((2, 3), (1, 0)), ((2, 3), (0, 2)), ((2, 3, 1), (1, 1, 0))])
def test_monomial_norms_closed_form_vs_quadrature(p, k):
    dom = ModelDomain.ellipsoid(p)
    assert reinhardt_norm(dom, k) == pytest.approx(reinhardt_norm_quadrature(dom, k), rel=1e-9)


def test_ball_volume():
    assert ReinhardtSeries(ModelDomain.ball(2)).volume() == pytest.approx(math.pi ** 2 / 2)


@pytest.mark.parametrize("degree", [40, "auto", "inf"])
def test_series_matches_closed_form_ball(degree, rng):
    N = 2
    pts = random_points(rng, 6, N)
    pts = 0.6 * pts / np.linalg.norm(pts, axis=1, keepdims=True) * rng.uniform(size=(6, 1))
    series = ReinhardtSeries(ModelDomain.ball(N), degree=degree)
    assert np.allclose(series.log_kernel(pts), ClosedFormBall(N).log_kernel(pts), rtol=0, atol=1e-9)


def test_series_reports_large_tail():
    series = ReinhardtSeries(ModelDomain.ball(2), degree=10)
    with pytest.raises(KernelError):
        series.log_kernel(np.array([0.99, 0.0]))


def test_resummed_matches_truncated_inside():
    eng = ReinhardtSeries(ModelDomain.ellipsoid((2, 3, 1)), degree="inf")
    pts = np.array([[0.3, 0.2j, 0.1], [0.0, 0.5, -0.3j]])
    trunc = eng.truncated(pts, 120)
    assert np.allclose(eng.resummed_log(pts), np.log(trunc.value), atol=1e-9)


def test_transport_engine_on_siegel_matches_cayley():
    # Re(w) + |z|^2 < 0 is the preimage of the ball under the Cayley map
    eng = ellipsoid_transport_engine((1,), degree="inf")
    C = Cayley()
    ball = ClosedFormBall(2)
    for x in (np.array([0.1, -0.5]), np.array([0.3j, -0.2 + 0.4j]), np.array([0.0, -1e-6])):
        expected = ball.log_kernel(C.apply(x)) + 2 * np.log(abs(C.jacobian_det(x)))
        depth = -(x[-1].real + abs(x[0]) ** 2)
        assert eng.log_kernel(x, depth) == pytest.approx(expected, abs=1e-8)


def test_transport_kernel_helper():
    eng = ReinhardtSeries(ModelDomain.ball(2), degree="inf")
    from bergscale.bergman import Identity

    z = np.array([0.2, 0.1j])
    assert transport_kernel(eng, Identity(), z) == pytest.approx(ball_kernel_diag(2, z), rel=1e-9)


def _ball_sampler(N):
    corner = (1 + 1j) * np.ones(N)
    return RejectionSampler(lambda z: np.sum(np.abs(z) ** 2, axis=1) < 1, -corner, corner, chunk=50_000)


def test_gram_sampled_ball_center_within_ci():
    eng = GramSampled(_ball_sampler(2), degree=4, samples=60_000, seed=3)
    val, half = eng.kernel_with_error(np.zeros(2))
    assert abs(val - 2 / math.pi ** 2) <= 2 * half
    assert eng.volume_rel_error > 0
    assert eng.volume == pytest.approx(math.pi ** 2 / 2, rel=0.02)


def test_gram_sampled_is_reproducible():
    a = GramSampled(_ball_sampler(1), degree=3, samples=10_000, seed=7)
    b = GramSampled(_ball_sampler(1), degree=3, samples=10_000, seed=7)
    assert a.log_kernel(np.array([0.1])) == b.log_kernel(np.array([0.1]))


def test_fallback_matches_selected_backend(rng):
    x = np.abs(random_points(rng, 5, 3, 0.3)) ** 2
    p = np.array([2, 3, 1], dtype=np.int64)
    depth = 1 - np.sum(x ** p, axis=1)
    assert np.all(depth > 0)
    a = _fallback.ellipsoid_log_kernel(x, depth, p, 0.1)
    b = _backend.ellipsoid_log_kernel(np.ascontiguousarray(x), depth, p, 0.1)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)
    z = random_points(rng, 4, 2)
    exps = np.array([[0, 0], [1, 2], [3, 0]], dtype=np.int64)
    assert np.allclose(_fallback.monomial_matrix(z, exps), _backend.monomial_matrix(np.ascontiguousarray(z), exps))
    logn = np.array([0.0, 0.5, -0.2])
    deg = exps.sum(axis=1)
    t1, s1 = _fallback.ellipsoid_series(x[:, :2], exps, logn, deg, 3)
    t2, s2 = _backend.ellipsoid_series(np.ascontiguousarray(x[:, :2]), exps, logn, deg, 3)
    assert np.allclose(t1, t2) and np.allclose(s1, s2)


def test_backend_name():
    assert _backend.BACKEND in ("cython", "python")


def test_pure_python_selected_by_environment():
    import os
    import subprocess
    import sys

    env = dict(os.environ, BERGSCALE_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import bergscale; print(bergscale.BACKEND)"], env=env,
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
