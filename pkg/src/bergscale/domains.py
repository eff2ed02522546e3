"""Domain descriptions: polynomial defining functions, model domains, ellipsoids.

Points are complex vectors ordered ``(z_1, ..., z_n, w)``: the tangential
coordinates first, the normal coordinate last.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .wpoly import HermitianPolynomial, Multiweight, PolynomialError, parse_polynomial, default_names


class DomainError(ValueError):
    pass


def lift(poly: HermitianPolynomial, extra: int = 1) -> HermitianPolynomial:
    """View a polynomial in ``n`` variables as one in ``n + extra`` (new variables trailing)."""
    pad = (0,) * extra
    return HermitianPolynomial(poly.n + extra, {(p + pad, q + pad): c for (p, q), c in poly.terms.items()})


def re_w(n: int) -> HermitianPolynomial:
    """``Re(w)`` as a polynomial in ``(z_1..z_n, w)``."""
    w = HermitianPolynomial.variable(n + 1, n)
    return (w + w.conjugate()) * Fraction(1, 2)


def im_w(n: int) -> HermitianPolynomial:
    w = HermitianPolynomial.variable(n + 1, n)
    return (w - w.conjugate()) * complex(0, -0.5)


def variable_names(n: int) -> list[str]:
    return default_names(n) + ["w"]


class DefiningFunction:
    """Local defining function ``rho(z, w)``, a real polynomial in ``(z, w)``.

    The body must contain ``Re(w)`` with unit coefficient and vanish at the
    origin, so the origin is the distinguished boundary point.
    """

    def __init__(self, body: HermitianPolynomial, weights: Multiweight | None = None, *, check: bool = True):
        if body.n < 1:
            raise DomainError("need at least the normal variable")
        self.body = body
        self.n = body.n - 1
        self.weights = weights
        if weights is not None and weights.n != self.n:
            raise DomainError(f"multiweight has {weights.n} entries, expected {self.n}")
        if check:
            if not body.is_real(1e-14):
                raise DomainError("defining function must be real-valued")
            origin = np.zeros(body.n, dtype=complex)
            if abs(body.eval(origin)) > 1e-14:
                raise DomainError("defining function must vanish at the origin")
            dw = body.dz(self.n).eval(origin)
            if abs(dw - 0.5) > 1e-14:
                raise DomainError(f"d(rho)/dw at the origin is {dw}, expected 1/2 (Re(w) with unit coefficient)")
        self._grad = None

    @classmethod
    def from_model(cls, P: HermitianPolynomial, weights: Multiweight | None = None,
                   extra: HermitianPolynomial | None = None) -> "DefiningFunction":
        """``Re(w) + P(z) + extra(z, w)``."""
        body = re_w(P.n) + lift(P)
        if extra is not None:
            body = body + extra
        return cls(body, weights)

    @classmethod
    def parse(cls, text: str, n: int, weights: Multiweight | None = None) -> "DefiningFunction":
        return cls(parse_polynomial(text, names=variable_names(n)), weights)

    def to_literal(self) -> str:
        return self.body.to_literal(variable_names(self.n))

    def __repr__(self):
        return f"DefiningFunction({self.to_literal()!r})"

    def __eq__(self, other):
        return isinstance(other, DefiningFunction) and other.body == self.body and other.weights == self.weights

    @property
    def tangential_part(self) -> HermitianPolynomial:
        """Terms that do not involve ``w`` (``P(z)`` plus ``R_1``), in ``n`` variables."""
        keep = self.body.filter(lambda p, q: p[-1] == 0 and q[-1] == 0)
        return HermitianPolynomial(self.n, {(p[:-1], q[:-1]): c for (p, q), c in keep.terms.items()})

    def __call__(self, point) -> float | np.ndarray:
        return np.real(self.body.eval(point))

    def dz(self, k: int) -> HermitianPolynomial:
        return self.body.dz(k)

    def gradient(self, point) -> np.ndarray:
        """Holomorphic gradient ``(d rho/dz_1, ..., d rho/dw)``."""
        if self._grad is None:
            self._grad = [self.body.dz(k) for k in range(self.body.n)]
        point = np.asarray(point, dtype=complex)
        return np.stack([g.eval(point) for g in self._grad], axis=-1)

    def real_gradient_norm(self, point) -> np.ndarray:
        # |grad_R rho| = 2 |d rho/dz|
        return 2 * np.linalg.norm(self.gradient(point), axis=-1)

    def is_affine_in_re_w(self) -> bool:
        """True when the only ``w``-dependent term is ``Re(w)`` itself."""
        rest = self.body - re_w(self.n)
        return all(p[-1] == 0 and q[-1] == 0 for p, q in rest.terms)


@dataclass(frozen=True)
class ModelDomain:
    """A model domain.

    ``kind`` is one of ``siegel``, ``hermitian``, ``weighted``, ``diagonal``,
    ``ball``, ``ellipsoid``. Parameters: ``n`` (tangential dimension) for
    ``siegel``; ``matrix`` for ``hermitian``; ``poly`` for ``weighted``;
    ``eigenvalues`` for ``diagonal``; ``N`` for ``ball``; ``exponents`` (one
    per coordinate, in point order) for ``ellipsoid``.
    """

    kind: str
    n: int = 0
    matrix: np.ndarray | None = field(default=None, compare=False)
    poly: HermitianPolynomial | None = None
    eigenvalues: tuple = ()
    N: int = 0
    exponents: tuple = ()

    def __post_init__(self):
        kinds = ("siegel", "hermitian", "weighted", "diagonal", "ball", "ellipsoid")
        if self.kind not in kinds:
            raise DomainError(f"unknown model kind {self.kind!r}")
        if self.kind == "hermitian":
            A = np.asarray(self.matrix, dtype=complex)
            if A.ndim != 2 or A.shape[0] != A.shape[1] or not np.allclose(A, A.conj().T, atol=1e-12):
                raise DomainError("hermitian model needs a Hermitian matrix")
            if np.linalg.eigvalsh(A)[0] < -1e-12:
                raise DomainError("hermitian model matrix must be positive semidefinite")
            object.__setattr__(self, "matrix", A)
        if self.kind == "ellipsoid":
            if not self.exponents or any(int(p) != p or p < 1 for p in self.exponents):
                raise DomainError("ellipsoid exponents must be positive integers")
            object.__setattr__(self, "exponents", tuple(int(p) for p in self.exponents))
        if self.kind == "diagonal" and any(v < 0 for v in self.eigenvalues):
            raise DomainError("diagonal model eigenvalues must be non-negative")

    # convenience constructors
    @classmethod
    def siegel(cls, n: int) -> "ModelDomain":
        return cls("siegel", n=n)

    @classmethod
    def ball(cls, N: int) -> "ModelDomain":
        return cls("ball", N=N)

    @classmethod
    def ellipsoid(cls, exponents: Sequence[int]) -> "ModelDomain":
        return cls("ellipsoid", exponents=tuple(exponents))

    @classmethod
    def hermitian(cls, A) -> "ModelDomain":
        return cls("hermitian", matrix=np.asarray(A, dtype=complex))

    @classmethod
    def weighted(cls, P: HermitianPolynomial) -> "ModelDomain":
        return cls("weighted", poly=P)

    @classmethod
    def diagonal(cls, eigenvalues: Sequence[float]) -> "ModelDomain":
        return cls("diagonal", eigenvalues=tuple(float(v) for v in eigenvalues))

    @property
    def dim(self) -> int:
        """Complex dimension of the ambient space."""
        if self.kind == "siegel":
            return self.n + 1
        if self.kind == "hermitian":
            return self.matrix.shape[0] + 1
        if self.kind == "weighted":
            return self.poly.n + 1
        if self.kind == "diagonal":
            return len(self.eigenvalues) + 1
        if self.kind == "ball":
            return self.N
        return len(self.exponents)

    def defining_value(self, point) -> np.ndarray | float:
        """Models: ``Re(w) + tangential part``; ball and ellipsoid: ``sum |.|^(2p) - 1``."""
        x = np.asarray(point, dtype=complex)
        if x.shape[-1] != self.dim:
            raise DomainError(f"point has dimension {x.shape[-1]}, domain has {self.dim}")
        z, w = x[..., :-1], x[..., -1]
        if self.kind == "siegel":
            return w.real + np.sum(np.abs(z) ** 2, axis=-1)
        if self.kind == "hermitian":
            return w.real + np.real(np.einsum("...k,kl,...l->...", z, self.matrix, np.conj(z)))
        if self.kind == "weighted":
            return w.real + np.real(self.poly.eval(z))
        if self.kind == "diagonal":
            return w.real + np.sum(np.array(self.eigenvalues) * np.abs(z) ** 2, axis=-1)
        if self.kind == "ball":
            return np.sum(np.abs(x) ** 2, axis=-1) - 1.0
        return np.sum(np.abs(x) ** (2 * np.array(self.exponents)), axis=-1) - 1.0

    def as_defining_function(self) -> DefiningFunction:
        if self.kind in ("ball", "ellipsoid"):
            raise DomainError("bounded models have no Re(w)-normalized defining function")
        n = self.dim - 1
        if self.kind == "siegel":
            P = sum((HermitianPolynomial.abs_power(n, k, 1) for k in range(n)), HermitianPolynomial.zero(n))
        elif self.kind == "diagonal":
            P = sum((HermitianPolynomial.abs_power(n, k, 1, lam) for k, lam in enumerate(self.eigenvalues)),
                    HermitianPolynomial.zero(n))
        elif self.kind == "hermitian":
            terms = {}
            for k in range(n):
                for l in range(n):
                    e_k = tuple(int(i == k) for i in range(n))
                    e_l = tuple(int(i == l) for i in range(n))
                    terms[(e_k, e_l)] = complex(self.matrix[k, l])
            P = HermitianPolynomial(n, terms)
        else:
            P = self.poly
        return DefiningFunction.from_model(P)


def contains(domain, point) -> bool | np.ndarray:
    """Strict membership: defining value below zero."""
    if isinstance(domain, DefiningFunction):
        val = domain(point)
    elif isinstance(domain, ModelDomain):
        val = domain.defining_value(point)
    else:
        raise TypeError(f"unsupported domain type {type(domain).__name__}")
    return val < 0


def drop_to_boundary(rho: DefiningFunction, eta) -> tuple[float, np.ndarray]:
    """Push ``eta`` along ``Re(w)`` onto ``{rho = 0}``; returns ``(eps, eta_prime)``."""
    eta = np.asarray(eta, dtype=complex)
    val = float(rho(eta))
    if val >= 0:
        raise DomainError(f"point is not interior: rho = {val}")
    shift = np.zeros_like(eta)
    shift[-1] = 1.0
    if rho.is_affine_in_re_w():
        eps = -val
    else:
        f = lambda t: float(rho(eta + t * shift))
        hi = -val
        while f(hi) <= 0:
            hi *= 2
            if hi > 1e12:
                raise DomainError("no boundary crossing along Re(w)")
        eps = brentq(f, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return eps, eta + eps * shift


@dataclass
class DistanceEstimate:
    distance: float
    lower: float
    upper: float
    foot: np.ndarray

    @property
    def sandwich_ok(self) -> bool:
        return self.lower <= self.distance * (1 + 1e-9) and self.distance <= self.upper * (1 + 1e-9)


def _project(rho: DefiningFunction, y: np.ndarray, iters: int = 30) -> np.ndarray:
    # Newton steps along the real gradient onto {rho = 0}
    for _ in range(iters):
        val = float(rho(y))
        grad = 2 * np.conj(rho.gradient(y))  # real gradient packed as x + i y
        gg = float(np.real(np.vdot(grad, grad)))
        if gg == 0:
            break
        y = y - val * grad / gg
        if abs(val) < 1e-15:
            break
    return y


def boundary_distance(rho: DefiningFunction, eta, radius: float | None = None, iters: int = 50,
                      rng: np.random.Generator | None = None) -> DistanceEstimate:
    """Euclidean distance from an interior point to ``{rho = 0}``.

    Projected-gradient descent of ``|y - eta|^2`` on the zero set, started from
    the point reached by :func:`drop_to_boundary`. The lower bound uses the sup
    of ``|grad rho|`` sampled over the search ball.
    """
    eta = np.asarray(eta, dtype=complex)
    eps, y = drop_to_boundary(rho, eta)
    radius = 2 * eps if radius is None else radius
    if eps > radius:
        raise DomainError("no boundary point found within the search radius")
    best, best_d = y.copy(), eps
    step = 0.5
    for _ in range(iters):
        grad = 2 * np.conj(rho.gradient(y))
        nrm = np.linalg.norm(grad)
        unit = grad / nrm if nrm else grad
        diff = y - eta
        tangent = diff - np.real(np.vdot(unit, diff)) * unit
        cand = _project(rho, y - step * tangent)
        d = np.linalg.norm(cand - eta)
        if d < best_d and abs(rho(cand)) < 1e-12 * (1 + np.linalg.norm(eta)):
            best, best_d, y = cand, d, cand
        else:
            step *= 0.5
    rng = np.random.default_rng(0) if rng is None else rng
    dim = eta.shape[0]
    pts = rng.normal(size=(512, dim)) + 1j * rng.normal(size=(512, dim))
    pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    pts = eta + pts * radius * rng.uniform(size=(512, 1)) ** (1 / (2 * dim))
    pts = np.vstack([pts, eta, best])
    sup_grad = float(np.max(rho.real_gradient_norm(pts)))
    lower = abs(float(rho(eta))) / sup_grad
    return DistanceEstimate(float(best_d), lower, float(eps), best)


class EllipsoidTransport:
    """Biholomorphism from ``{Re(w) + sum |z_k|^(2 p_k) < 0}`` onto ``{|w|^2 + sum |z_k|^(2 p_k) < 1}``.

    ``w' = (1 + w)/(1 - w)``, ``z_k' = 4^(1/(2 p_k)) z_k / (1 - w)^(1/p_k)``
    with the principal branch, valid since ``Re(1 - w) > 0`` on the source.
    """

    def __init__(self, p: Sequence[int]):
        self.p = tuple(int(v) for v in p)
        if not self.p or min(self.p) < 1:
            raise DomainError("exponents must be positive integers")
        self.c = np.array([4.0 ** (1.0 / (2 * pk)) for pk in self.p])
        self.inv_p = np.array([1.0 / pk for pk in self.p])

    @property
    def source(self) -> ModelDomain:
        n = len(self.p)
        P = sum((HermitianPolynomial.abs_power(n, k, pk) for k, pk in enumerate(self.p)), HermitianPolynomial.zero(n))
        return ModelDomain.weighted(P)

    @property
    def target(self) -> ModelDomain:
        return ModelDomain.ellipsoid(self.p + (1,))

    def _one_minus_w(self, w):
        omw = 1 - w
        if np.any(np.real(omw) <= 0):
            raise DomainError("branch failure: Re(1 - w) <= 0")
        return omw

    def __call__(self, x):
        x = np.asarray(x, dtype=complex)
        z, w = x[..., :-1], x[..., -1]
        omw = self._one_minus_w(w)[..., None]
        zp = self.c * z / omw ** self.inv_p
        wp = (1 + w) / omw[..., 0]
        return np.concatenate([zp, wp[..., None]], axis=-1)

    def inverse(self, y):
        y = np.asarray(y, dtype=complex)
        zp, wp = y[..., :-1], y[..., -1]
        w = (wp - 1) / (wp + 1)
        omw = (1 - w)[..., None]
        z = zp * omw ** self.inv_p / self.c
        return np.concatenate([z, w[..., None]], axis=-1)

    def jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        n = len(self.p)
        z, w = x[:-1], x[-1]
        omw = self._one_minus_w(w)
        J = np.zeros((n + 1, n + 1), dtype=complex)
        for k in range(n):
            J[k, k] = self.c[k] / omw ** self.inv_p[k]
            J[k, n] = self.c[k] * z[k] * self.inv_p[k] * omw ** (-self.inv_p[k] - 1)
        J[n, n] = 2 / omw ** 2
        return J

    def jacobian_det(self, x) -> complex | np.ndarray:
        x = np.asarray(x, dtype=complex)
        omw = self._one_minus_w(x[..., -1])
        det = 2 / omw ** 2
        for k in range(len(self.p)):
            det = det * self.c[k] / omw ** self.inv_p[k]
        return det

    def target_depth(self, x, source_depth=None):
        """``1 - |w'|^2 - sum |z'|^(2p)`` computed as ``4 * depth / |1 - w|^2``.

        ``source_depth`` (``-rho`` at ``x``) may be supplied exactly to avoid the
        cancellation in ``-Re(w) - sum |z|^(2p)`` close to the boundary.
        """
        x = np.asarray(x, dtype=complex)
        if source_depth is None:
            source_depth = -(x[..., -1].real + np.sum(np.abs(x[..., :-1]) ** (2 * np.array(self.p)), axis=-1))
        return 4 * source_depth / np.abs(1 - x[..., -1]) ** 2


def model_to_bounded(p: Sequence[int]) -> EllipsoidTransport:
    return EllipsoidTransport(p)
