from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bergscale.wpoly import (HermitianPolynomial, Multiweight, PolynomialError, euler_residual,
                             is_weighted_homogeneous, levi_form, parse_polynomial, polar_laplacian_identity,
                             psh_certificate, strong_h_margin, vanishing_order_check, weighted_degree,
                             weighted_sphere_grid)
from conftest import KN_P, UNBALANCED_P, random_points

H = HermitianPolynomial


def test_canonical_form_drops_zero_terms():
    z = H.variable(1, 0)
    p = z * 2 - z * 2
    assert p == H.zero(1)
    assert len(p) == 0 and not p


def test_real_constructor_is_conjugate_symmetric():
    p = H.real(2, {((1, 0), (0, 1)): 1 + 2j})
    assert p.is_real()
    assert p.coefficient((0, 1), (1, 0)) == pytest.approx(0.5 - 1j)


def test_integer_coefficients_stay_exact():
    p = parse_polynomial("15/14*z1^7*zb1 + 15/14*z1*zb1^7", n=1)
    assert all(isinstance(c, Fraction) for c in p.terms.values())
    assert p.coefficient((7,), (1,)) == Fraction(15, 14)


def test_eval_matches_numpy(rng):
    p = parse_polynomial("3*z1^2*zb2 - 1/2*z2*zb2 + 2", n=2)
    z = random_points(rng, 7, 2)
    expected = 3 * z[:, 0] ** 2 * np.conj(z[:, 1]) - 0.5 * np.abs(z[:, 1]) ** 2 + 2
    assert np.allclose(p.eval(z), expected, rtol=1e-14)


def test_exact_cancellation_at_real_point():
    # |z|^8 - |z|^2 Re z^6 vanishes identically on the real axis
    p = parse_polynomial(UNBALANCED_P, n=1) + parse_polynomial("1/2*z1^4*zb1^4", n=1) * 0
    x = np.array([0.3])
    assert p.eval(x) == 0
    assert p.dz(0).eval(x) == 0


def test_wirtinger_derivative_against_finite_differences(rng):
    p = parse_polynomial("z1^3*zb1*zb2^2 + 2*z2^2 - 1/3*z1*zb2", n=2)
    z0 = random_points(rng, 1, 2, 0.5)[0]
    h = 1e-6
    for k in range(2):
        e = np.zeros(2)
        e[k] = 1
        dx = (p.eval(z0 + h * e) - p.eval(z0 - h * e)) / (2 * h)
        dy = (p.eval(z0 + 1j * h * e) - p.eval(z0 - 1j * h * e)) / (2 * h)
        assert p.dz(k).eval(z0) == pytest.approx((dx - 1j * dy) / 2, rel=1e-8)
        assert p.dzbar(k).eval(z0) == pytest.approx((dx + 1j * dy) / 2, rel=1e-8)


def test_laplacian_of_abs_power():
    # Laplacian of |z|^(2m) is (2m)^2 |z|^(2m-2)
    for m in (1, 2, 4):
        assert H.abs_power(1, 0, m).laplacian() == H.abs_power(1, 0, m - 1, 4 * m * m)


def test_substitute_and_shift():
    z = H.variable(1, 0)
    p = z * z.conjugate()
    shifted = p.shift([2])
    assert shifted.eval(np.array([0.5 + 0.5j])) == pytest.approx(abs(2.5 + 0.5j) ** 2)


@st.composite
def polynomials(draw):
    n = draw(st.integers(1, 2))
    terms = {}
    for _ in range(draw(st.integers(0, 4))):
        p = tuple(draw(st.integers(0, 3)) for _ in range(n))
        q = tuple(draw(st.integers(0, 3)) for _ in range(n))
        num = draw(st.integers(-20, 20))
        den = draw(st.integers(1, 9))
        terms[(p, q)] = Fraction(num, den)
    return H(n, terms)


@given(polynomials())
@settings(max_examples=60, deadline=None)
def test_literal_round_trip(p):
    assert parse_polynomial(p.to_literal(), n=p.n) == p


@given(polynomials(), polynomials())
@settings(max_examples=40, deadline=None)
def test_product_rule(a, b):
    if a.n != b.n:
        return
    for k in range(a.n):
        assert (a * b).dz(k) == a.dz(k) * b + a * b.dz(k)


def test_parse_errors():
    with pytest.raises(PolynomialError):
        parse_polynomial("z1^-1", n=1)
    with pytest.raises(PolynomialError):
        parse_polynomial("z3", n=2)


def test_multiweight_validation():
    assert Multiweight([2, 3]).lambdas == (Fraction(1, 4), Fraction(1, 6))
    with pytest.raises(PolynomialError):
        Multiweight([3, 2])
    with pytest.raises(PolynomialError):
        Multiweight.from_lambdas([Fraction(1, 3)])
    assert Multiweight.from_lambdas([Fraction(1, 4)]) == Multiweight([2])


def test_weighted_degree_and_homogeneity():
    m = Multiweight([2, 3])
    assert weighted_degree(((2, 0), (2, 0)), m) == 1
    assert is_weighted_homogeneous(m.sigma(), m) == 1
    assert is_weighted_homogeneous(parse_polynomial("z1^2*zb1^2 + z2*zb2", n=2), m) is None


def _random_weight_one(rng, m: Multiweight):
    # weight-1 real polynomial: random Hermitian combination of monomials with sum (p+q)/(2m) = 1
    n = m.n
    import itertools

    ranges = [range(2 * mk + 1) for mk in m.m]
    keys = []
    for p in itertools.product(*ranges):
        for q in itertools.product(*ranges):
            if weighted_degree((p, q), m) == 1:
                keys.append((p, q))
    terms = {}
    for key in keys:
        if rng.uniform() < 0.5:
            terms[key] = complex(rng.normal(), rng.normal())
    return H.real(n, terms) if terms else m.sigma()


@pytest.mark.parametrize("m", [(1,), (4,), (2, 3), (1, 2)])
def test_euler_identity_random_weight_one(rng, m):
    mw = Multiweight(m)
    for _ in range(5):
        P = _random_weight_one(rng, mw)
        z = random_points(rng, 64, mw.n, 0.7)
        assert euler_residual(P, mw, z) <= 1e-10


def test_euler_rejects_wrong_weight():
    with pytest.raises(PolynomialError):
        euler_residual(parse_polynomial("z1*zb1", n=1), Multiweight([2]), np.ones((1, 1)))


def test_levi_form_of_sigma_is_diagonal():
    L = levi_form(Multiweight([2, 3]).sigma(), np.array([0.5, 0.5j]))
    assert np.allclose(L, np.diag([4 * 0.25, 9 * 0.5 ** 4]))


def test_psh_certificate_detects_failure():
    ok, mineig, _ = psh_certificate(parse_polynomial("z1*zb1 - 2*z2*zb2", n=2), np.ones((3, 2)))
    assert not ok and mineig == pytest.approx(-2)


@pytest.mark.parametrize("text,m,expected", [
    ("z1^4*zb1^4", (4,), 1.0),
    ("z1^2*zb1^2 + z2^3*zb2^3", (2, 3), 1.0),
    (KN_P, (4,), 1 / 16),
    (UNBALANCED_P, (4,), 9 / 16),
])
def test_strong_h_margins(text, m, expected):
    mw = Multiweight(m)
    delta, _ = strong_h_margin(parse_polynomial(text, n=mw.n), mw)
    assert delta == pytest.approx(expected, abs=1e-4)


def test_weighted_sphere_grid_lies_on_sphere():
    mw = Multiweight([2, 3])
    pts = weighted_sphere_grid(mw, n_angle=4, n_simplex=4)
    assert np.allclose(np.real(mw.sigma().eval(pts)), 1.0)


def test_vanishing_order():
    mw = Multiweight([2])
    assert vanishing_order_check(parse_polynomial("z1^3*zb1^2", n=1), mw, 1)
    assert not vanishing_order_check(parse_polynomial("z1^2*zb1^2", n=1), mw, 1)


def test_polar_laplacian_identity():
    Hh = parse_polynomial("15/14*z1^7*zb1 + 15/14*z1*zb1^7 + z1^4*zb1^4", n=1)
    assert polar_laplacian_identity(Hh, np.linspace(0, 2 * np.pi, 13)) < 1e-6
