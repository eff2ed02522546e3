"""Polynomials in z and conj(z), Wirtinger calculus and weighted homogeneity.

A :class:`HermitianPolynomial` stores ``coeff * z^p * conj(z)^q`` terms in a
dict keyed by ``(p, q)`` multi-index pairs. Coefficients are exact
``Fraction`` values where the data is rational and complex doubles otherwise.
"""
from __future__ import annotations

import itertools
import re
from fractions import Fraction
from numbers import Number
from typing import Iterable, Mapping, Sequence

import numpy as np


class PolynomialError(ValueError):
    pass


def _is_zero(c) -> bool:
    return c == 0


def _conj(c):
    if isinstance(c, (Fraction, int)):
        return c
    return complex(c).conjugate() if isinstance(c, complex) else c


def _normalize_coeff(c):
    if isinstance(c, bool):
        raise TypeError("boolean coefficient")
    if isinstance(c, int):
        return Fraction(c)
    if isinstance(c, complex) and c.imag == 0:
        return float(c.real)
    return c


class HermitianPolynomial:
    """Finite sum of monomials ``coeff * z^p * conj(z)^q`` in ``n`` variables.

    Instances are immutable; every arithmetic operation returns a new polynomial
    in canonical form (no zero coefficients stored).
    """

    __slots__ = ("n", "terms", "_arrays")

    def __init__(self, n: int, terms: Mapping | None = None):
        self.n = int(n)
        canon = {}
        for (p, q), c in (terms or {}).items():
            p, q = tuple(int(v) for v in p), tuple(int(v) for v in q)
            if len(p) != self.n or len(q) != self.n:
                raise PolynomialError(f"multi-index length must be {self.n}, got {p}, {q}")
            if min(p + q, default=0) < 0:
                raise PolynomialError("negative exponent")
            c = _normalize_coeff(c)
            prev = canon.get((p, q))
            canon[(p, q)] = c if prev is None else prev + c
        self.terms = {k: v for k, v in canon.items() if not _is_zero(v)}
        self._arrays = None

    # -- constructors -----------------------------------------------------
    @classmethod
    def zero(cls, n: int) -> "HermitianPolynomial":
        return cls(n, {})

    @classmethod
    def constant(cls, n: int, c) -> "HermitianPolynomial":
        z = (0,) * n
        return cls(n, {(z, z): c})

    @classmethod
    def variable(cls, n: int, k: int, conjugate: bool = False) -> "HermitianPolynomial":
        """The coordinate ``z_k`` (0-based ``k``), or its conjugate."""
        e = tuple(1 if i == k else 0 for i in range(n))
        z = (0,) * n
        return cls(n, {(z, e) if conjugate else (e, z): 1})

    @classmethod
    def real(cls, n: int, terms: Mapping) -> "HermitianPolynomial":
        """Real-valued polynomial: the given terms projected onto their real part.

        Already conjugate-symmetric input is returned unchanged.
        """
        poly = cls(n, terms)
        return (poly + poly.conjugate()) * Fraction(1, 2)

    @classmethod
    def abs_power(cls, n: int, k: int, e: int, coeff=1) -> "HermitianPolynomial":
        """``coeff * |z_k|^(2e)``."""
        p = tuple(e if i == k else 0 for i in range(n))
        return cls(n, {(p, p): coeff})

    # -- basic protocol -----------------------------------------------------
    def __repr__(self) -> str:
        return f"HermitianPolynomial({self.n}, {self.to_literal()!r})"

    def __str__(self) -> str:
        return self.to_literal()

    def __eq__(self, other) -> bool:
        if isinstance(other, Number):
            other = HermitianPolynomial.constant(self.n, other)
        if not isinstance(other, HermitianPolynomial):
            return NotImplemented
        return self.n == other.n and self.terms == other.terms

    def __hash__(self):
        return hash((self.n, frozenset(self.terms.items())))

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __len__(self) -> int:
        return len(self.terms)

    def _coerce(self, other) -> "HermitianPolynomial":
        if isinstance(other, HermitianPolynomial):
            if other.n != self.n:
                raise PolynomialError(f"dimension mismatch: {self.n} vs {other.n}")
            return other
        if isinstance(other, Number):
            return HermitianPolynomial.constant(self.n, other)
        raise TypeError(f"cannot combine polynomial with {type(other).__name__}")

    def __add__(self, other):
        other = self._coerce(other)
        terms = dict(self.terms)
        for k, c in other.terms.items():
            terms[k] = terms[k] + c if k in terms else c
        return HermitianPolynomial(self.n, terms)

    __radd__ = __add__

    def __neg__(self):
        return HermitianPolynomial(self.n, {k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if isinstance(other, Number):
            other = _normalize_coeff(other)
            return HermitianPolynomial(self.n, {k: c * other for k, c in self.terms.items()})
        other = self._coerce(other)
        terms: dict = {}
        for (p1, q1), c1 in self.terms.items():
            for (p2, q2), c2 in other.terms.items():
                key = (tuple(a + b for a, b in zip(p1, p2)), tuple(a + b for a, b in zip(q1, q2)))
                c = c1 * c2
                terms[key] = terms[key] + c if key in terms else c
        return HermitianPolynomial(self.n, terms)

    __rmul__ = __mul__

    def __pow__(self, e: int):
        if not isinstance(e, int) or e < 0:
            raise PolynomialError("only non-negative integer powers")
        out = HermitianPolynomial.constant(self.n, 1)
        base = self
        while e:
            if e & 1:
                out = out * base
            base = base * base
            e >>= 1
        return out

    # -- structure ------------------------------------------------------------
    def conjugate(self) -> "HermitianPolynomial":
        return HermitianPolynomial(self.n, {(q, p): _conj(c) for (p, q), c in self.terms.items()})

    def is_real(self, tol: float = 0.0) -> bool:
        for (p, q), c in self.terms.items():
            partner = self.terms.get((q, p), 0)
            if abs(complex(c) - complex(_conj(partner))) > tol * max(1.0, abs(complex(c))):
                return False
        return True

    def degree(self) -> int:
        return max((sum(p) + sum(q) for p, q in self.terms), default=0)

    def coefficient(self, p: Sequence[int], q: Sequence[int]):
        return self.terms.get((tuple(p), tuple(q)), 0)

    def is_holomorphic(self) -> bool:
        return all(not any(q) for _, q in self.terms)

    def max_abs_coeff(self) -> float:
        return max((abs(complex(c)) for c in self.terms.values()), default=0.0)

    def filter(self, predicate) -> "HermitianPolynomial":
        """Keep only the terms whose ``(p, q)`` satisfies ``predicate``."""
        return HermitianPolynomial(self.n, {k: c for k, c in self.terms.items() if predicate(*k)})

    def to_float(self) -> "HermitianPolynomial":
        return HermitianPolynomial(self.n, {k: complex(c) for k, c in self.terms.items()})

    # -- evaluation -----------------------------------------------------------
    def _compiled(self):
        if self._arrays is None:
            keys = list(self.terms)
            P = np.array([p for p, _ in keys], dtype=np.int64).reshape(len(keys), self.n)
            Q = np.array([q for _, q in keys], dtype=np.int64).reshape(len(keys), self.n)
            C = np.array([complex(self.terms[k]) for k in keys], dtype=complex)
            self._arrays = (P, Q, C)
        return self._arrays

    def eval(self, z) -> complex | np.ndarray:
        """Evaluate at ``z`` (shape ``(..., n)``); returns complex values.

        For a single real point with exact rational coefficients, terms sharing
        the same total degree per variable are combined exactly first, so
        structural cancellations evaluate to an exact zero.
        """
        arr = np.asarray(z, dtype=complex)
        if arr.shape[-1:] != (self.n,) and not (self.n == 0 and arr.ndim == 0):
            raise PolynomialError(f"point dimension {arr.shape[-1:]} does not match n={self.n}")
        if not self.terms:
            return 0j if arr.ndim == 1 else np.zeros(arr.shape[:-1], dtype=complex)
        if arr.ndim == 1 and not np.any(arr.imag):
            return self._eval_real_point(arr.real)
        P, Q, C = self._compiled()
        zz = arr[..., None, :]
        mono = np.prod(zz ** P * np.conj(zz) ** Q, axis=-1)
        return mono @ C

    def _eval_real_point(self, x: np.ndarray) -> complex:
        grouped: dict = {}
        for (p, q), c in self.terms.items():
            key = tuple(a + b for a, b in zip(p, q))
            grouped[key] = grouped[key] + c if key in grouped else c
        total = 0j
        for key, c in grouped.items():
            if _is_zero(c):
                continue
            total += complex(c) * float(np.prod([xi ** e for xi, e in zip(x, key)]))
        return total

    def __call__(self, z):
        return self.eval(z)

    # -- calculus -----------------------------------------------------------------
    def wirtinger_derivative(self, k: int, kind: str = "holomorphic") -> "HermitianPolynomial":
        """Exact ``d/dz_k`` (``kind='holomorphic'``) or ``d/dconj(z_k)``; ``k`` is 0-based."""
        if not 0 <= k < self.n:
            raise PolynomialError(f"variable index {k} out of range for n={self.n}")
        if kind not in ("holomorphic", "antiholomorphic"):
            raise PolynomialError(f"unknown derivative kind {kind!r}")
        terms = {}
        for (p, q), c in self.terms.items():
            e = p if kind == "holomorphic" else q
            if e[k] == 0:
                continue
            e2 = tuple(v - (i == k) for i, v in enumerate(e))
            key = (e2, q) if kind == "holomorphic" else (p, e2)
            terms[key] = c * e[k]
        return HermitianPolynomial(self.n, terms)

    def dz(self, k: int) -> "HermitianPolynomial":
        return self.wirtinger_derivative(k, "holomorphic")

    def dzbar(self, k: int) -> "HermitianPolynomial":
        return self.wirtinger_derivative(k, "antiholomorphic")

    def laplacian(self) -> "HermitianPolynomial":
        """Euclidean Laplacian ``4 * sum_k d^2/dz_k dconj(z_k)``."""
        out = HermitianPolynomial.zero(self.n)
        for k in range(self.n):
            out = out + self.dz(k).dzbar(k) * 4
        return out

    def substitute(self, images: Sequence["HermitianPolynomial"]) -> "HermitianPolynomial":
        """Compose with the holomorphic map ``z_k -> images[k]``.

        Conjugate variables are replaced by the conjugated images. All images
        must be holomorphic polynomials in a common set of variables.
        """
        if len(images) != self.n:
            raise PolynomialError("need one image per variable")
        if not images:
            return self
        m = images[0].n
        for im in images:
            if im.n != m:
                raise PolynomialError("images must share a dimension")
        conj_images = [im.conjugate() for im in images]
        hol_cache: dict = {}
        anti_cache: dict = {}

        def power(cache, base, k, e):
            if (k, e) not in cache:
                cache[(k, e)] = base[k] ** e
            return cache[(k, e)]

        out = HermitianPolynomial.zero(m)
        for (p, q), c in self.terms.items():
            term = HermitianPolynomial.constant(m, c)
            for k in range(self.n):
                if p[k]:
                    term = term * power(hol_cache, images, k, p[k])
                if q[k]:
                    term = term * power(anti_cache, conj_images, k, q[k])
            out = out + term
        return out

    def shift(self, a: Sequence) -> "HermitianPolynomial":
        """Taylor re-expansion: the polynomial ``z -> self(a + z)``."""
        images = []
        for k, ak in enumerate(a):
            images.append(HermitianPolynomial.variable(self.n, k) + _normalize_coeff(ak))
        return self.substitute(images)

    # -- literal format ---------------------------------------------------------
    def to_literal(self, names: Sequence[str] | None = None) -> str:
        names = list(names) if names is not None else default_names(self.n)
        if not self.terms:
            return "0"
        parts = []
        for (p, q), c in sorted(self.terms.items(), key=lambda kv: (sum(kv[0][0]) + sum(kv[0][1]), kv[0])):
            factors = [_coeff_literal(c)]
            for k in range(self.n):
                if p[k]:
                    factors.append(names[k] + (f"^{p[k]}" if p[k] > 1 else ""))
                if q[k]:
                    factors.append(_conj_name(names[k]) + (f"^{q[k]}" if q[k] > 1 else ""))
            parts.append(" * ".join(factors))
        return " + ".join(parts)


def default_names(n: int) -> list[str]:
    return [f"z{k + 1}" for k in range(n)]


def _conj_name(name: str) -> str:
    if name.startswith("z") and name[1:].isdigit():
        return "zb" + name[1:]
    return name + "b"


def _coeff_literal(c) -> str:
    if isinstance(c, Fraction):
        return str(c)
    if isinstance(c, float):
        return repr(c)
    c = complex(c)
    return "(" + repr(c.real) + ("+" if c.imag >= 0 or np.isnan(c.imag) else "-") + repr(abs(c.imag)) + "j)"


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)"
    r"|(?P<cplx>\([^()]*\))|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^]))"
)


def parse_polynomial(text: str, names: Sequence[str] | None = None, n: int | None = None) -> HermitianPolynomial:
    """Parse the literal format ``coeff * z1^p1 * zb1^q1 + ...``.

    ``zbK`` (or ``<name>b``) is the conjugate of ``zK``; ``i``/``j`` suffixes and
    parenthesized Python complex literals are accepted for complex coefficients.
    """
    if names is None:
        if n is None:
            found = [int(m) for m in re.findall(r"zb?(\d+)", text)]
            n = max(found, default=0)
        names = default_names(n)
    names = list(names)
    lookup = {}
    for k, name in enumerate(names):
        lookup[name] = (k, False)
        lookup[_conj_name(name)] = (k, True)
    dim = len(names)

    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise PolynomialError(f"cannot parse polynomial literal near {text[pos:pos + 12]!r}")
        pos = m.end()
        kind = m.lastgroup
        tokens.append((kind, m.group(kind)))

    out = HermitianPolynomial.zero(dim)
    i = 0

    def read_number(i):
        kind, val = tokens[i]
        if kind == "cplx":
            inner = val[1:-1].replace("i", "j").replace(" ", "")
            return complex(inner), i + 1
        if "." in val or "e" in val.lower():
            num = float(val)
        else:
            num = Fraction(int(val))
        i += 1
        if i < len(tokens) and tokens[i] == ("name", "i") or i < len(tokens) and tokens[i] == ("name", "j"):
            return complex(0, float(num)), i + 1
        if i + 1 < len(tokens) and tokens[i] == ("op", "/") and tokens[i + 1][0] == "num":
            den = tokens[i + 1][1]
            if isinstance(num, Fraction) and den.isdigit():
                return num / int(den), i + 2
            return float(num) / float(den), i + 2
        return num, i

    while i < len(tokens):
        sign = 1
        while i < len(tokens) and tokens[i][0] == "op" and tokens[i][1] in "+-":
            if tokens[i][1] == "-":
                sign = -sign
            i += 1
        coeff = Fraction(sign)
        mono_p = [0] * dim
        mono_q = [0] * dim
        expect_factor = True
        while i < len(tokens) and expect_factor:
            kind, val = tokens[i]
            if kind in ("num", "cplx"):
                num, i = read_number(i)
                coeff = coeff * num
            elif kind == "name":
                if val in ("i", "j") and val not in lookup:
                    coeff = coeff * 1j
                    i += 1
                else:
                    if val not in lookup:
                        raise PolynomialError(f"unknown variable {val!r}")
                    k, is_conj = lookup[val]
                    i += 1
                    e = 1
                    if i < len(tokens) and tokens[i] == ("op", "^"):
                        if i + 1 >= len(tokens) or tokens[i + 1][0] != "num":
                            raise PolynomialError("exponent must be a non-negative integer")
                        e = int(tokens[i + 1][1])
                        i += 2
                    (mono_q if is_conj else mono_p)[k] += e
            else:
                raise PolynomialError(f"unexpected token {val!r}")
            if i < len(tokens) and tokens[i] == ("op", "*"):
                i += 1
            else:
                expect_factor = False
        out = out + HermitianPolynomial(dim, {(tuple(mono_p), tuple(mono_q)): coeff})
    return out


class Multiweight:
    """Weights ``lambda_k = 1/(2 m_k)`` attached to the variables ``z_k``."""

    __slots__ = ("m", "lambdas")

    def __init__(self, m: Sequence[int]):
        m = tuple(int(v) for v in m)
        if not m or min(m) < 1:
            raise PolynomialError("multitype entries must be positive integers")
        lambdas = tuple(Fraction(1, 2 * mk) for mk in m)
        if any(a < b for a, b in zip(lambdas, lambdas[1:])):
            raise PolynomialError(f"weights must be non-increasing, got {lambdas}")
        self.m = m
        self.lambdas = lambdas

    @classmethod
    def from_lambdas(cls, lambdas: Sequence) -> "Multiweight":
        m = []
        for lam in lambdas:
            inv = 1 / Fraction(lam)
            if inv.denominator != 1 or inv.numerator % 2:
                raise PolynomialError(f"weight {lam} is not the reciprocal of an even integer")
            m.append(inv.numerator // 2)
        return cls(m)

    @property
    def n(self) -> int:
        return len(self.m)

    def __repr__(self):
        return f"Multiweight(m={self.m})"

    def __eq__(self, other):
        return isinstance(other, Multiweight) and other.m == self.m

    def __hash__(self):
        return hash(self.m)

    def sigma(self) -> HermitianPolynomial:
        """``sum_k |z_k|^(2 m_k)``, the weight-1 reference polynomial."""
        out = HermitianPolynomial.zero(self.n)
        for k, mk in enumerate(self.m):
            out = out + HermitianPolynomial.abs_power(self.n, k, mk)
        return out

    def dilate(self, t: float, z):
        """``(t^lambda_1 z_1, ..., t^lambda_n z_n)``."""
        z = np.asarray(z, dtype=complex)
        return z * np.array([float(t) ** float(lam) for lam in self.lambdas])


def weighted_degree(pq, weights: Multiweight) -> Fraction:
    p, q = pq
    if len(p) != weights.n or len(q) != weights.n:
        raise PolynomialError("multi-index length does not match the multiweight")
    return sum((Fraction(a + b) * lam for a, b, lam in zip(p, q, weights.lambdas)), Fraction(0))


def is_weighted_homogeneous(poly: HermitianPolynomial, weights: Multiweight) -> Fraction | None:
    """Common weighted degree of all terms, or ``None`` if they differ."""
    if not poly:
        raise PolynomialError("zero polynomial has no weighted degree")
    degrees = {weighted_degree(k, weights) for k in poly.terms}
    return degrees.pop() if len(degrees) == 1 else None


def _require_weight_one(P: HermitianPolynomial, weights: Multiweight):
    for key in P.terms:
        wd = weighted_degree(key, weights)
        if wd != 1:
            raise PolynomialError(f"term z^{key[0]} zb^{key[1]} has weighted degree {wd}, expected 1")


def euler_residual(P: HermitianPolynomial, weights: Multiweight, samples) -> float:
    """Max over samples of ``|2 Re sum_j dP/dz_j * z_j/(2 m_j) - P(z)|``."""
    _require_weight_one(P, weights)
    z = np.atleast_2d(np.asarray(samples, dtype=complex))
    lhs = np.zeros(z.shape[0], dtype=complex)
    for j, mj in enumerate(weights.m):
        lhs += P.dz(j).eval(z) * z[:, j] / (2 * mj)
    resid = np.abs(2 * lhs.real - P.eval(z))
    return float(resid.max())


def levi_form(f: HermitianPolynomial, z) -> np.ndarray:
    """Complex Hessian ``L[k, l] = d^2 f / dz_k dconj(z_l)`` at ``z`` (Hermitian)."""
    z = np.asarray(z, dtype=complex)
    batch = z.shape[:-1]
    L = np.empty(batch + (f.n, f.n), dtype=complex)
    for k in range(f.n):
        dk = f.dz(k)
        for l in range(f.n):
            L[..., k, l] = dk.dzbar(l).eval(z)
    return 0.5 * (L + np.conj(np.swapaxes(L, -1, -2)))


def psh_certificate(f: HermitianPolynomial, samples):
    """Sampled plurisubharmonicity test.

    Returns ``(ok, min_eigenvalue, argmin_point)`` where ``ok`` means the smallest
    Levi eigenvalue over the samples is at least ``-1e-10``.
    """
    z = np.atleast_2d(np.asarray(samples, dtype=complex))
    if z.shape[0] == 0:
        raise PolynomialError("empty sample set")
    eig = np.linalg.eigvalsh(levi_form(f, z))[:, 0]
    i = int(np.argmin(eig))
    return bool(eig[i] >= -1e-10), float(eig[i]), z[i]


def weighted_sphere_grid(weights: Multiweight, n_angle: int = 32, n_simplex: int = 16) -> np.ndarray:
    """Points with ``sigma(z) = 1``: ``|z_k| = s_k^lambda_k`` over a simplex grid times angle tori."""
    n = weights.n
    if n == 1:
        simplex = [np.array([1.0])]
    else:
        simplex = []
        for idx in itertools.product(range(n_simplex + 1), repeat=n - 1):
            if sum(idx) <= n_simplex:
                s = np.array(list(idx) + [n_simplex - sum(idx)], dtype=float) / n_simplex
                simplex.append(s)
    thetas = 2 * np.pi * np.arange(n_angle) / n_angle
    pts = []
    lam = np.array([float(v) for v in weights.lambdas])
    for s in simplex:
        mod = s ** lam
        for ang in itertools.product(thetas, repeat=n):
            pts.append(mod * np.exp(1j * np.array(ang)))
    return np.array(pts)


def _sphere_point(params, weights: Multiweight):
    n = weights.n
    lam = np.array([float(v) for v in weights.lambdas])
    if n == 1:
        s = np.array([1.0])
        ang = params
    else:
        raw = np.abs(params[: n - 1])
        raw = np.minimum(raw, 1.0)
        s = np.empty(n)
        rem = 1.0
        for k in range(n - 1):
            s[k] = rem * raw[k]
            rem -= s[k]
        s[-1] = rem
        ang = params[n - 1:]
    return s ** lam * np.exp(1j * np.asarray(ang))


def strong_h_margin(P: HermitianPolynomial, weights: Multiweight, grid=None, *, bracket=(0.0, 10.0),
                    tol: float = 1e-6, refine: bool = True):
    """Largest ``delta`` with ``P - delta*sigma`` plurisubharmonic on the weighted sphere.

    The answer is found by bisection over a sample set: the grid (default
    :func:`weighted_sphere_grid`) plus points from a local minimization of the
    pointwise margin started at the worst grid points. Returns
    ``(delta_star, argmin_point)``.
    """
    _require_weight_one(P, weights)
    sigma = weights.sigma()
    pts = weighted_sphere_grid(weights) if grid is None else np.atleast_2d(np.asarray(grid, dtype=complex))
    LP = levi_form(P, pts)
    LS = levi_form(sigma, pts)

    if refine:
        extra = _refine_margin(P, sigma, weights, pts, LP, LS)
        if len(extra):
            pts = np.vstack([pts, extra])
            LP = np.concatenate([LP, levi_form(P, extra)])
            LS = np.concatenate([LS, levi_form(sigma, extra)])

    def feasible(delta):
        return np.linalg.eigvalsh(LP - delta * LS)[:, 0].min() >= -1e-10

    lo, hi = bracket
    if not feasible(lo):
        return 0.0, pts[int(np.argmin(np.linalg.eigvalsh(LP)[:, 0]))]
    if feasible(hi):
        return float(hi), pts[0]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    worst = int(np.argmin(np.linalg.eigvalsh(LP - lo * LS)[:, 0]))
    return float(lo), pts[worst]


def _pointwise_margin(LP, LS):
    # largest delta with LP - delta*LS >= 0 at one point; inf where LS vanishes
    w, V = np.linalg.eigh(LS)
    if w[-1] <= 1e-14:
        return np.inf
    keep = w > 1e-12 * w[-1]
    if not keep.all():
        null = V[:, ~keep]
        if np.linalg.eigvalsh(null.conj().T @ LP @ null)[0] < -1e-12:
            return -np.inf
    Vk = V[:, keep] / np.sqrt(w[keep])
    return float(np.linalg.eigvalsh(Vk.conj().T @ LP @ Vk)[0])


def _refine_margin(P, sigma, weights, pts, LP, LS, n_starts: int = 6):
    from scipy.optimize import minimize

    margins = np.array([_pointwise_margin(a, b) for a, b in zip(LP, LS)])
    order = np.argsort(margins)[:n_starts]
    n = weights.n
    lam = np.array([float(v) for v in weights.lambdas])
    found = []
    for idx in order:
        z0 = pts[idx]
        s0 = np.abs(z0) ** (1.0 / lam)
        s0 = s0 / s0.sum()
        raw = []
        rem = 1.0
        for k in range(n - 1):
            raw.append(s0[k] / rem if rem > 0 else 0.0)
            rem -= s0[k]
        x0 = np.concatenate([np.array(raw), np.angle(z0)])

        def objective(x):
            z = _sphere_point(x, weights)
            val = _pointwise_margin(levi_form(P, z), levi_form(sigma, z))
            return val if np.isfinite(val) else 1e6

        res = minimize(objective, x0, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 4000})
        found.append(_sphere_point(res.x, weights))
    return np.array(found)


def vanishing_order_check(f: HermitianPolynomial, weights: Multiweight, mu) -> bool:
    """True iff every term of ``f`` has weighted degree strictly above ``mu``."""
    mu = Fraction(mu)
    return all(weighted_degree(k, weights) > mu for k in f.terms)


def polar_laplacian_identity(H: HermitianPolynomial, thetas, radii=(0.5, 1.0, 2.0), h: float = 1e-3) -> float:
    """Residual of ``Delta H(r e^{it}) = r^(2m-2) ((2m)^2 g(t) + g''(t))`` with ``g(t) = H(e^{it})``.

    ``g''`` uses the 4th-order central stencil with one Richardson level;
    ``g`` itself is evaluated in 40-digit arithmetic so the stencil only carries
    truncation error.
    """
    import mpmath

    if H.n != 1:
        raise PolynomialError("polar identity needs a one-variable polynomial")
    degrees = {sum(p) + sum(q) for p, q in H.terms}
    if len(degrees) != 1:
        raise PolynomialError("H must be homogeneous")
    two_m = degrees.pop()
    lap = H.laplacian()

    terms = [(p[0] - q[0], c) for (p, q), c in H.terms.items()]

    def g(t):
        with mpmath.workdps(40):
            t = mpmath.mpf(t)
            acc = mpmath.mpc(0)
            for k, c in terms:
                cc = mpmath.mpf(c.numerator) / c.denominator if isinstance(c, Fraction) else mpmath.mpc(c)
                acc += cc * mpmath.expj(k * t)
            return acc.real

    def d2(t, step):
        with mpmath.workdps(40):
            step = mpmath.mpf(step)
            vals = [g(t + k * step) for k in (-2, -1, 0, 1, 2)]
            return (-vals[0] + 16 * vals[1] - 30 * vals[2] + 16 * vals[3] - vals[4]) / (12 * step ** 2)

    worst = 0.0
    for t in np.atleast_1d(thetas):
        with mpmath.workdps(40):
            gpp = (16 * d2(t, h / 2) - d2(t, h)) / 15
            rhs_unit = float(two_m ** 2 * g(t) + gpp)
        for r in radii:
            z = np.array([r * np.exp(1j * t)])
            lhs = lap.eval(z).real
            worst = max(worst, abs(lhs - r ** (two_m - 2) * rhs_unit))
    return worst
