import numpy as np
import pytest

from bergscale.sequences import (ApproachSequence, Expression, SequenceError, Thresholds, TangencyReport,
                                 check_B_condition, check_spherical_tangential, check_uniform_lambda_tangential,
                                 balance_reduction, distance_consistency, ell_factors, is_bounded,
                                 is_bounded_below, is_little_o)
from bergscale.wpoly import Multiweight
from conftest import ellipsoid_point

JS = tuple(2 ** k for k in range(4, 13))


@pytest.mark.parametrize("text,j,value", [
    ("j^(-1/4)", 16, 0.5),
    ("-2/j - 1/j^2", 4, -0.5625),
    ("i*j^(-1/2)", 4, 0.5j),
    ("(1 + i)/j", 2, 0.5 + 0.5j),
    ("3", 99, 3),
    ("2**3/j", 8, 1),
])
def test_expression_values(text, j, value):
    assert Expression.parse(text)(j) == pytest.approx(value)


@pytest.mark.parametrize("text", ["", "j +", "import os", "exp(j)", "k/j", "j.real", "[j]"])
def test_expression_rejects(text):
    with pytest.raises(SequenceError):
        Expression.parse(text)


def test_exact_rational_exponent():
    # 1/6 must stay exact so that j^(1/6)^6 == j
    v = Expression.parse("j^(1/6)")(2 ** 12)
    assert v.real ** 6 == pytest.approx(2 ** 12, rel=1e-14)


def test_sequence_points(ellipsoid_rho):
    seq = ApproachSequence.from_strings(["j^(-1/4)", "j^(-1/6)"], "-2/j - 1/j^2", ellipsoid_rho, JS)
    assert np.allclose(seq.point(64), ellipsoid_point(64))
    assert seq.check_inside().shape == (len(JS), 3)
    with pytest.raises(SequenceError):
        ApproachSequence.from_strings(["j^(-1/4)"], "-1/j", ellipsoid_rho)


def test_outside_point_is_reported(ellipsoid_rho):
    seq = ApproachSequence.from_strings(["j^(-1/4)", "j^(-1/6)"], "1/j", ellipsoid_rho, JS)
    with pytest.raises(SequenceError):
        seq.check_inside()


def test_ellipsoid_sequence_is_tangential(ellipsoid_rho):
    seq = ApproachSequence.from_strings(["j^(-1/4)", "j^(-1/6)"], "-2/j - 1/j^2", ellipsoid_rho, JS)
    rep = check_uniform_lambda_tangential(seq)
    assert rep.passed, rep.verdicts


def test_nontangential_sequence_fails_b_and_c(ellipsoid_rho):
    seq = ApproachSequence.from_strings(["j^(-1/2)", "j^(-1/2)"], "-1/j", ellipsoid_rho, JS)
    rep = check_uniform_lambda_tangential(seq)
    assert rep.verdicts["a"]
    assert not rep.verdicts["b"] and not rep.verdicts["c"]


def test_B_condition_ratios(ellipsoid_rho):
    seq = ApproachSequence.from_strings(["j^(-1/4)", "j^(-1/6)"], "-2/j - 1/j^2", ellipsoid_rho, JS)
    rep = check_B_condition(seq, ellipsoid_rho.tangential_part, Multiweight([2, 3]))
    r1, r2 = rep.ratios.values()
    assert np.allclose(r1, 2) and np.allclose(r2, 3)
    assert rep.passed


def test_spherical_tangency_kn(kn_rho):
    seq = ApproachSequence.from_strings(["j^(-1/8)"], "-22/(7*j) - 1/j^2", kn_rho, JS)
    rep = check_spherical_tangential(seq, kn_rho.tangential_part, 8)
    assert rep.passed, rep.verdicts
    lap = rep.ratios["c:laplacian/|alpha|^6"]
    # 4 d dbar H at a real point: 4 (16 + 2 * 7 * 15/14)
    assert np.allclose(lap, 124)


def test_B_condition_kn_ratio(kn_rho):
    seq = ApproachSequence.from_strings(["j^(-1/8)"], "-22/(7*j) - 1/j^2", kn_rho, JS)
    rep = check_B_condition(seq, kn_rho.tangential_part, Multiweight([4]))
    # |alpha dP/dz| / |alpha|^8 = 4 + 8 * 15/14 on the real axis
    assert np.allclose(rep.ratios[next(iter(rep.ratios))], 4 + 60 / 7)
    assert rep.passed


def test_verdict_rules():
    th = Thresholds()
    js = np.array(JS, dtype=float)
    assert is_bounded(js, 2 + 1 / js, th)
    assert not is_bounded(js, js ** 0.5, th)
    assert is_bounded_below(js, 1 + 0 * js, th)
    assert not is_bounded_below(js, js ** -0.5, th)
    assert is_little_o(js, js ** -0.5, th)
    assert not is_little_o(js, 1 + 0 * js, th)


def test_report_recomputes_from_ratios():
    js = JS
    rep = TangencyReport("t", js, {"x": np.ones(len(js))}, {"x": ("x", "bounded")})
    assert rep.passed
    rep.ratios["x"] = np.array(js, dtype=float)
    assert not rep.recompute()["x"]
    assert rep.rows()[0]["j"] == js[0]


def test_balance_reduction_and_distance(ellipsoid_rho):
    seq = ApproachSequence.from_strings(["j^(-1/4)", "j^(-1/6)"], "-2/j - 1/j^2", ellipsoid_rho, JS)
    red = balance_reduction(seq, Multiweight([2, 3]))
    # eps_j = 1/j^2 exactly, so ell_j = j
    assert red["slope"] == pytest.approx(1, abs=1e-9)
    rows = distance_consistency(seq, JS[:4])
    assert all(r["ok"] for r in rows)


def test_ell_factors_ellipsoid(ellipsoid_rho):
    from bergscale.domains import drop_to_boundary
    from bergscale.scaling import tau_multitype

    j = 4096
    eta = ellipsoid_point(j)
    eps, base = drop_to_boundary(ellipsoid_rho, eta)
    tau = tau_multitype(base[:2], eps, [2, 3])
    ell = ell_factors(ellipsoid_rho, base, tau, eps)
    # (tau_k |d rho/dz_k| / eps)^2 = m_k^2 |alpha_k|^(2 m_k) / eps
    assert np.allclose(ell, np.array([4, 9]) * np.abs(base[:2]) ** np.array([4, 6]) / eps, rtol=1e-12)
