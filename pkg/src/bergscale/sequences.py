"""Approach sequences, their tangency diagnostics and the induced scale factors."""
from __future__ import annotations

import ast
import operator
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .domains import DefiningFunction, boundary_distance, contains, drop_to_boundary
from .wpoly import HermitianPolynomial, Multiweight


class SequenceError(ValueError):
    pass


DEFAULT_JS = tuple(2 ** k for k in range(4, 15))


# -- expression grammar: numbers, j, i, + - * / ** and parentheses ---------------

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}


def _compile(node, text):
    if isinstance(node, ast.Expression):
        return _compile(node.body, text)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        v = node.value
        return lambda j: v
    if isinstance(node, ast.Name):
        if node.id == "j":
            return lambda j: j
        if node.id == "i":
            return lambda j: 1j
        raise SequenceError(f"unknown name {node.id!r} in {text!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _compile(node.operand, text)
        if isinstance(node.op, ast.USub):
            return lambda j: -inner(j)
        return inner
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        f = _BINOPS[type(node.op)]
        a, b = _compile(node.left, text), _compile(node.right, text)
        if isinstance(node.op, ast.Div):
            # exact rational constants such as 1/6 in exponents
            return lambda j: _div(a(j), b(j))
        return lambda j: f(a(j), b(j))
    raise SequenceError(f"unsupported syntax in {text!r}")


def _div(x, y):
    if isinstance(x, int) and isinstance(y, int):
        return Fraction(x, y)
    return x / y


def _numeric(v):
    if isinstance(v, Fraction):
        return float(v)
    return v


@dataclass(frozen=True)
class Expression:
    """Closed-form ``j -> value`` with ``^`` accepted as power."""

    text: str
    func: Callable = field(repr=False, compare=False)

    @classmethod
    def parse(cls, text: str) -> "Expression":
        src = text.strip().replace("^", "**")
        if not src:
            raise SequenceError("empty expression")
        try:
            tree = ast.parse(src, mode="eval")
        except SyntaxError as exc:
            raise SequenceError(f"cannot parse {text!r}: {exc.msg}") from None
        return cls(text.strip(), _compile(tree, text))

    def __call__(self, j) -> complex:
        j = Fraction(j) if isinstance(j, int) else j
        v = self.func(j)
        if isinstance(v, Fraction):
            return complex(float(v))
        return complex(v)


# -- sequences ---------------------------------------------------------------------


@dataclass(frozen=True)
class ApproachSequence:
    """``j -> eta_j = (alpha_j, beta_j)`` given by closed-form expressions."""

    alpha: tuple
    beta: Expression
    domain: DefiningFunction
    js: tuple = DEFAULT_JS

    @classmethod
    def from_strings(cls, alpha: Sequence[str], beta: str, domain: DefiningFunction, js=DEFAULT_JS):
        if len(alpha) != domain.n:
            raise SequenceError(f"{len(alpha)} tangential expressions for a domain with n = {domain.n}")
        return cls(tuple(Expression.parse(a) for a in alpha), Expression.parse(beta), domain, tuple(js))

    def point(self, j) -> np.ndarray:
        return np.array([a(j) for a in self.alpha] + [self.beta(j)], dtype=complex)

    def points(self, js=None) -> np.ndarray:
        js = self.js if js is None else js
        return np.array([self.point(j) for j in js])

    def check_inside(self, js=None) -> np.ndarray:
        """All points for ``js``; raises if one of them is not interior."""
        js = self.js if js is None else js
        pts = self.points(js)
        inside = np.atleast_1d(contains(self.domain, pts))
        if not np.all(inside):
            bad = [j for j, ok in zip(js, inside) if not ok]
            raise SequenceError(f"sequence leaves the domain at j = {bad}")
        return pts

    def eps(self, js=None) -> np.ndarray:
        js = self.js if js is None else js
        return np.array([drop_to_boundary(self.domain, self.point(j))[0] for j in js])

    def monotone_from(self, js=None, limit=None) -> int | None:
        """Smallest ``j0`` after which ``|eta_j - limit|`` decreases along ``js``."""
        js = list(self.js if js is None else js)
        pts = self.points(js)
        limit = np.zeros(pts.shape[1]) if limit is None else np.asarray(limit)
        d = np.linalg.norm(pts - limit, axis=1)
        j0 = None
        for k in range(len(js) - 1, 0, -1):
            if d[k] >= d[k - 1]:
                break
            j0 = js[k - 1]
        return j0

    def describe(self) -> dict:
        return {"alpha": [a.text for a in self.alpha], "beta": self.beta.text, "js": list(self.js)}


# -- verdict thresholds and reports ----------------------------------------------


@dataclass(frozen=True)
class Thresholds:
    bounded_max: float = 1e3
    bounded_slope: float = 0.05
    little_o_slope: float = -0.1
    floor: float = 1e-3


def _slope(js, r) -> float:
    r = np.asarray(r, dtype=float)
    if np.any(~np.isfinite(r)) or np.any(r <= 0):
        return float("nan")
    return float(np.polyfit(np.log(np.asarray(js, dtype=float)), np.log(r), 1)[0])


def is_bounded(js, r, th: Thresholds) -> bool:
    r = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(r)):
        return False
    if np.max(r) > th.bounded_max:
        return False
    if np.all(r == 0):
        return True
    s = _slope(js, np.maximum(r, np.finfo(float).tiny))
    return bool(s <= th.bounded_slope)


def is_bounded_below(js, r, th: Thresholds) -> bool:
    r = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(r)) or np.min(r) < th.floor:
        return False
    return bool(_slope(js, r) >= -th.bounded_slope)


def is_little_o(js, r, th: Thresholds) -> bool:
    s = _slope(js, r)
    return bool(np.isfinite(s) and s <= th.little_o_slope)


@dataclass
class TangencyReport:
    """Per-j ratios with verdicts recomputed from the stored ratios alone.

    ``tests`` maps a condition name to ``(ratio key, rule)`` with rule one of
    ``bounded``, ``bounded_below``, ``little_o`` or ``comparable`` (bounded
    above and below).
    """

    kind: str
    js: tuple
    ratios: dict
    tests: dict
    thresholds: Thresholds = field(default_factory=Thresholds)
    verdicts: dict = field(default_factory=dict)
    slopes: dict = field(default_factory=dict)

    def __post_init__(self):
        self.recompute()

    def recompute(self) -> dict:
        rules = {
            "bounded": is_bounded,
            "bounded_below": is_bounded_below,
            "little_o": is_little_o,
            "comparable": lambda js, r, th: is_bounded(js, r, th) and is_bounded_below(js, r, th),
        }
        self.slopes = {k: _slope(self.js, v) for k, v in self.ratios.items()}
        out = {}
        for name, (keys, rule) in self.tests.items():
            keys = [keys] if isinstance(keys, str) else keys
            out[name] = all(rules[rule](self.js, self.ratios[k], self.thresholds) for k in keys)
        self.verdicts = out
        return out

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def rows(self) -> list[dict]:
        keys = list(self.ratios)
        return [{"j": j, **{k: float(self.ratios[k][i]) for k in keys}} for i, j in enumerate(self.js)]


def _alpha_eps(seq: ApproachSequence, js):
    pts = seq.check_inside(js)
    eps = np.array([drop_to_boundary(seq.domain, p)[0] for p in pts])
    return pts, pts[:, :-1], eps


def check_uniform_lambda_tangential(seq: ApproachSequence, rho: DefiningFunction | None = None,
                                    m: Multiweight | None = None, js=None,
                                    thresholds: Thresholds | None = None) -> TangencyReport:
    """Conditions (a) ``|Im beta| <~ eps``, (b) ``eps = o(|alpha_k|^(2 m_k))``, (c) comparable ``|alpha_k|^(2 m_k)``."""
    js = tuple(seq.js if js is None else js)
    rho = rho or seq.domain
    m = m or rho.weights
    if rho is not seq.domain:
        seq = ApproachSequence(seq.alpha, seq.beta, rho, js)
    pts, alpha, eps = _alpha_eps(seq, js)
    mm = np.array(m.m, dtype=float)
    ratios = {"a:im_beta/eps": np.abs(pts[:, -1].imag) / eps}
    powers = np.abs(alpha) ** (2 * mm)
    with np.errstate(divide="ignore"):
        for k in range(alpha.shape[1]):
            ratios[f"b:eps/|alpha{k + 1}|^{2 * int(mm[k])}"] = np.where(powers[:, k] > 0, eps / np.where(powers[:, k] > 0, powers[:, k], 1), np.inf)
        ratios["c:max/min |alpha_k|^2m_k"] = np.where(powers.min(axis=1) > 0, powers.max(axis=1) / np.where(powers.min(axis=1) > 0, powers.min(axis=1), 1), np.inf)
    b_keys = [k for k in ratios if k.startswith("b:")]
    tests = {"a": ("a:im_beta/eps", "bounded"), "b": (b_keys, "little_o"), "c": ("c:max/min |alpha_k|^2m_k", "bounded")}
    return TangencyReport("uniform-lambda-tangential", js, ratios, tests, thresholds or Thresholds())


def check_spherical_tangential(seq: ApproachSequence, H: HermitianPolynomial, two_m: int, js=None,
                               thresholds: Thresholds | None = None) -> TangencyReport:
    """Conditions (a), (b) plus (c) ``Delta H(alpha) >~ |alpha|^(2m-2)``."""
    if seq.domain.n != 1:
        raise SequenceError("spherical tangency is defined in dimension 2")
    js = tuple(seq.js if js is None else js)
    pts, alpha, eps = _alpha_eps(seq, js)
    a = np.abs(alpha[:, 0])
    lap = H.laplacian()
    ratios = {"a:im_beta/eps": np.abs(pts[:, -1].imag) / eps}
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios[f"b:eps/|alpha|^{two_m}"] = np.where(a > 0, eps / np.where(a > 0, a, 1) ** two_m, np.inf)
        vals = np.real(lap.eval(alpha))
        ratios[f"c:laplacian/|alpha|^{two_m - 2}"] = np.where(a > 0, vals / np.where(a > 0, a, 1) ** (two_m - 2), 0.0)
    tests = {"a": ("a:im_beta/eps", "bounded"), "b": (f"b:eps/|alpha|^{two_m}", "little_o"),
             "c": (f"c:laplacian/|alpha|^{two_m - 2}", "bounded_below")}
    return TangencyReport("spherical-tangential", js, ratios, tests, thresholds or Thresholds())


def check_B_condition(seq: ApproachSequence, P: HermitianPolynomial, m: Multiweight, js=None,
                      thresholds: Thresholds | None = None) -> TangencyReport:
    """``|alpha_k dP/dz_k(alpha)| / |alpha_1|^(2 m_1)`` comparable to 1 for every ``k``."""
    js = tuple(seq.js if js is None else js)
    pts = seq.check_inside(js)
    alpha = pts[:, :-1]
    if np.any(alpha == 0):
        raise SequenceError("a tangential component vanishes")
    ref = np.abs(alpha[:, 0]) ** (2 * m.m[0])
    ratios = {}
    for k in range(P.n):
        ratios[f"|alpha{k + 1} dP/dz{k + 1}|/|alpha1|^{2 * m.m[0]}"] = np.abs(alpha[:, k] * P.dz(k).eval(alpha)) / ref
    tests = {"B": (list(ratios), "comparable")}
    return TangencyReport("B-condition", js, ratios, tests, thresholds or Thresholds())


def ell_factors(rho: DefiningFunction, eta, tau, eps: float) -> np.ndarray:
    """``(eps^-1 tau_k |d rho/dz_k (eta)|)^2`` per tangential direction."""
    grad = np.asarray(rho.gradient(np.asarray(eta, dtype=complex)))[: rho.n]
    return (np.asarray(tau, dtype=float) * np.abs(grad) / eps) ** 2


def shear_ell_factors(shear_coeffs: dict, n: int, tau, eps: float) -> np.ndarray:
    """Same quantity built from the linear shear coefficients ``A_k`` at the boundary base point.

    These are twice the holomorphic derivative of ``rho`` at ``eta'``.
    """
    A = np.zeros(n)
    for k in range(n):
        p = tuple(int(i == k) for i in range(n))
        A[k] = abs(complex(shear_coeffs.get(p, 0)))
    return (np.asarray(tau, dtype=float) * A / eps) ** 2


def balance_reduction(seq: ApproachSequence, m: Multiweight, js=None) -> dict:
    """``ell_j = |alpha_1|^(2 m_1)/eps_j`` and its fitted growth slope."""
    js = tuple(seq.js if js is None else js)
    _, alpha, eps = _alpha_eps(seq, js)
    ell = np.abs(alpha[:, 0]) ** (2 * m.m[0]) / eps
    return {"js": js, "ell": ell, "slope": _slope(js, ell)}


def distance_consistency(seq: ApproachSequence, js=None) -> list[dict]:
    """``eps_j`` against the Euclidean boundary distance and its sandwich bounds."""
    js = tuple(seq.js if js is None else js)
    out = []
    for j in js:
        p = seq.point(j)
        est = boundary_distance(seq.domain, p)
        out.append({"j": j, "eps": est.upper, "distance": est.distance, "lower": est.lower,
                    "ok": est.sandwich_ok})
    return out
