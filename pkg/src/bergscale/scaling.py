"""Rescaling maps for approach sequences and their Jacobians.

A pipeline is a list of stages acting on points ``(z_1, ..., z_n, w)``. Every
stage knows its forward map, inverse, holomorphic Jacobian and determinant; the
polynomial stages also expose their inverse as polynomials, which is what
makes :func:`pushforward_defining` exact.
"""
from __future__ import annotations

import itertools
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .domains import DefiningFunction, drop_to_boundary
from .wpoly import HermitianPolynomial, Multiweight, levi_form


class ScalingError(ValueError):
    pass


def _pts(x):
    return np.asarray(x, dtype=complex)


def _var(nvars, k):
    return HermitianPolynomial.variable(nvars, k)


def _exact(c):
    # real floats are exact binary rationals; keeping them as Fractions lets
    # Taylor shifts cancel exactly
    c = complex(c)
    return Fraction(c.real) if c.imag == 0 else c


class Stage:
    kind = "stage"
    polynomial = True

    def apply(self, x):
        raise NotImplementedError

    def inverse(self, y):
        raise NotImplementedError

    def jacobian(self, x) -> np.ndarray:
        raise NotImplementedError

    def jacobian_det(self, x):
        return np.linalg.det(self.jacobian(x))

    def inverse_polys(self, nvars: int) -> list[HermitianPolynomial]:
        raise ScalingError(f"{self.kind} stage has no polynomial inverse")

    def describe(self) -> dict:
        return {"kind": self.kind}

    def __call__(self, x):
        return self.apply(x)


@dataclass
class Translation(Stage):
    """``x -> x - center``."""

    center: np.ndarray
    kind = "translation"

    def __post_init__(self):
        self.center = _pts(self.center)

    def apply(self, x):
        return _pts(x) - self.center

    def inverse(self, y):
        return _pts(y) + self.center

    def jacobian(self, x):
        return np.eye(self.center.shape[0], dtype=complex)

    def jacobian_det(self, x):
        return 1.0 + 0j

    def inverse_polys(self, nvars):
        return [_var(nvars, k) + _exact(c) for k, c in enumerate(self.center)]

    def describe(self):
        return {"kind": self.kind, "center": [repr(complex(c)) for c in self.center]}


@dataclass
class Shear(Stage):
    """Normal-coordinate substitution ``w_old = d0 * w_new + sum_p d_p z^p``.

    ``coeffs`` maps tangential multi-indices ``p`` (``|p| >= 1``) to ``d_p``.
    The forward map solves for ``w_new``.
    """

    d0: complex
    coeffs: dict
    n: int
    kind = "shear"

    def __post_init__(self):
        self._d0 = complex(self.d0)
        self._num = {tuple(p): complex(d) for p, d in self.coeffs.items()}

    def _sum(self, z):
        out = np.zeros(z.shape[:-1], dtype=complex)
        for p, d in self._num.items():
            out = out + d * np.prod(z ** np.array(p), axis=-1)
        return out

    def _grad(self, z):
        g = np.zeros(self.n, dtype=complex)
        for p, d in self._num.items():
            for k in range(self.n):
                if p[k]:
                    q = np.array(p)
                    q[k] -= 1
                    g[k] += d * p[k] * np.prod(z ** q)
        return g

    def apply(self, x):
        x = _pts(x)
        z, w = x[..., :-1], x[..., -1]
        wn = (w - self._sum(z)) / self._d0
        return np.concatenate([z, wn[..., None]], axis=-1)

    def inverse(self, y):
        y = _pts(y)
        z, w = y[..., :-1], y[..., -1]
        wo = self._d0 * w + self._sum(z)
        return np.concatenate([z, wo[..., None]], axis=-1)

    def jacobian(self, x):
        x = _pts(x)
        J = np.eye(self.n + 1, dtype=complex)
        J[self.n, : self.n] = -self._grad(x[:-1]) / self._d0
        J[self.n, self.n] = 1 / self._d0
        return J

    def jacobian_det(self, x):
        return 1 / self._d0

    def inverse_polys(self, nvars):
        images = [_var(nvars, k) for k in range(self.n)]
        w = _var(nvars, self.n) * self.d0
        for p, d in self.coeffs.items():
            mono = HermitianPolynomial(nvars, {(tuple(p) + (0,), (0,) * nvars): d})
            w = w + mono
        return images + [w]

    def describe(self):
        return {"kind": self.kind, "d0": repr(complex(self.d0)),
                "coeffs": {",".join(map(str, p)): repr(complex(d)) for p, d in self.coeffs.items()}}


@dataclass
class Dilation(Stage):
    """``(z_k / tau_k, w / eps)``."""

    tau: np.ndarray
    eps: float
    kind = "dilation"

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        self.factors = np.concatenate([1 / self.tau, [1 / self.eps]])

    def apply(self, x):
        return _pts(x) * self.factors

    def inverse(self, y):
        return _pts(y) / self.factors

    def jacobian(self, x):
        return np.diag(self.factors).astype(complex)

    def jacobian_det(self, x):
        return complex(np.prod(self.factors))

    def inverse_polys(self, nvars):
        return [_var(nvars, k) * float(1 / f) for k, f in enumerate(self.factors)]

    def describe(self):
        return {"kind": self.kind, "tau": [repr(float(t)) for t in self.tau], "eps": repr(float(self.eps))}


@dataclass
class Unitary(Stage):
    """``(V z, w)`` with ``V`` unitary."""

    V: np.ndarray
    kind = "unitary"

    def __post_init__(self):
        self.V = np.asarray(self.V, dtype=complex)
        if not np.allclose(self.V @ self.V.conj().T, np.eye(self.V.shape[0]), atol=1e-12):
            raise ScalingError("matrix is not unitary")

    def apply(self, x):
        x = _pts(x)
        return np.concatenate([x[..., :-1] @ self.V.T, x[..., -1:]], axis=-1)

    def inverse(self, y):
        y = _pts(y)
        return np.concatenate([y[..., :-1] @ np.conj(self.V), y[..., -1:]], axis=-1)

    def jacobian(self, x):
        n = self.V.shape[0]
        J = np.eye(n + 1, dtype=complex)
        J[:n, :n] = self.V
        return J

    def jacobian_det(self, x):
        return complex(np.linalg.det(self.V))

    def inverse_polys(self, nvars):
        Vi = self.V.conj().T
        n = self.V.shape[0]
        out = []
        for k in range(n):
            acc = HermitianPolynomial.zero(nvars)
            for l in range(n):
                if Vi[k, l] != 0:
                    acc = acc + _var(nvars, l) * complex(Vi[k, l])
            out.append(acc)
        return out + [_var(nvars, n)]

    def describe(self):
        return {"kind": self.kind, "V": [[repr(complex(v)) for v in row] for row in self.V]}


@dataclass
class DiagonalStretch(Stage):
    """``(sqrt(lambda_k) z_k, w)``."""

    lambdas: np.ndarray
    kind = "stretch"

    def __post_init__(self):
        self.lambdas = np.asarray(self.lambdas, dtype=float)
        if np.any(self.lambdas <= 0):
            raise ScalingError("stretch factors must be positive")
        self.factors = np.concatenate([np.sqrt(self.lambdas), [1.0]])

    def apply(self, x):
        return _pts(x) * self.factors

    def inverse(self, y):
        return _pts(y) / self.factors

    def jacobian(self, x):
        return np.diag(self.factors).astype(complex)

    def jacobian_det(self, x):
        return complex(np.prod(self.factors))

    def inverse_polys(self, nvars):
        return [_var(nvars, k) * float(1 / f) for k, f in enumerate(self.factors)]

    def describe(self):
        return {"kind": self.kind, "lambdas": [repr(float(v)) for v in self.lambdas]}


class Cayley(Stage):
    """``(2 z / (1 - w), (w + 1)/(1 - w))``: Siegel half-space onto the unit ball."""

    kind = "cayley"
    polynomial = False

    def apply(self, x):
        x = _pts(x)
        z, w = x[..., :-1], x[..., -1]
        if np.any(w == 1):
            raise ScalingError("pole of the Cayley map at w = 1")
        omw = 1 - w
        return np.concatenate([2 * z / omw[..., None], ((w + 1) / omw)[..., None]], axis=-1)

    def inverse(self, y):
        y = _pts(y)
        zp, wp = y[..., :-1], y[..., -1]
        w = (wp - 1) / (wp + 1)
        return np.concatenate([zp * (1 - w)[..., None] / 2, w[..., None]], axis=-1)

    def jacobian(self, x):
        x = _pts(x)
        n = x.shape[0] - 1
        z, w = x[:-1], x[-1]
        omw = 1 - w
        J = np.zeros((n + 1, n + 1), dtype=complex)
        for k in range(n):
            J[k, k] = 2 / omw
            J[k, n] = 2 * z[k] / omw ** 2
        J[n, n] = 2 / omw ** 2
        return J

    def jacobian_det(self, x):
        x = _pts(x)
        n = x.shape[-1] - 1
        return 2 ** (n + 1) / (1 - x[..., -1]) ** (n + 2)


def cayley(point):
    """Image under the Cayley map together with its Jacobian matrix."""
    st = Cayley()
    return st.apply(point), st.jacobian(point)


@dataclass
class ScalingPipeline:
    stages: list

    def __post_init__(self):
        self.stages = list(self.stages)

    def apply(self, x):
        for st in self.stages:
            x = st.apply(x)
        return x

    __call__ = apply

    def inverse(self, y):
        for st in reversed(self.stages):
            y = st.inverse(y)
        return y

    def jacobian_matrix(self, x) -> np.ndarray:
        x = _pts(x)
        J = np.eye(x.shape[0], dtype=complex)
        for st in self.stages:
            J = st.jacobian(x) @ J
            x = st.apply(x)
        return J

    def jacobian_det(self, x):
        x = _pts(x)
        det = np.ones(x.shape[:-1], dtype=complex) if x.ndim > 1 else 1.0 + 0j
        for st in self.stages:
            det = det * st.jacobian_det(x)
            x = st.apply(x)
        return det

    def split(self, kind: str):
        """Pipelines before and from the first stage of the given kind."""
        for i, st in enumerate(self.stages):
            if st.kind == kind:
                return ScalingPipeline(self.stages[:i]), ScalingPipeline(self.stages[i:])
        return ScalingPipeline(self.stages), ScalingPipeline([])

    def describe(self) -> list:
        return [st.describe() for st in self.stages]


def compose_pipeline(stages: Sequence[Stage]) -> ScalingPipeline:
    dims = set()
    for st in stages:
        if isinstance(st, Translation):
            dims.add(st.center.shape[0])
        elif isinstance(st, Shear):
            dims.add(st.n + 1)
        elif isinstance(st, (Dilation, DiagonalStretch)):
            dims.add(st.factors.shape[0])
        elif isinstance(st, Unitary):
            dims.add(st.V.shape[0] + 1)
    if len(dims) > 1:
        raise ScalingError(f"stage dimensions disagree: {sorted(dims)}")
    return ScalingPipeline(list(stages))


# -- normal-coordinate normalization -------------------------------------------

def _holomorphic_part(poly: HermitianPolynomial) -> dict:
    return {p: c for (p, q), c in poly.terms.items() if not any(q)}


@dataclass
class Normalization:
    """Result of removing pure holomorphic terms at a boundary point."""

    base: np.ndarray
    shifted: HermitianPolynomial  # rho(base + x) in local coordinates
    d0: complex
    d: dict
    normalized: HermitianPolynomial  # rho after the shear (local coordinates)
    shear: Shear


def _normalize(rho: DefiningFunction, eta_prime, order: int, tol: float = 1e-10) -> Normalization:
    eta_prime = _pts(eta_prime)
    n = rho.n
    nv = n + 1
    val = float(rho(eta_prime))
    scale = max(1.0, rho.body.max_abs_coeff())
    if abs(val) > tol * scale:
        raise ScalingError(f"base point not on the boundary (rho = {val:.3g})")
    shifted = rho.body.shift([_exact(c) for c in eta_prime])
    # drop the round-off constant so the base point is exactly on the zero set
    shifted = shifted.filter(lambda p, q: any(p) or any(q))
    hol = _holomorphic_part(shifted)
    e_w = tuple(int(i == n) for i in range(nv))
    c_w = hol.get(e_w, 0)
    if c_w == 0:
        raise ScalingError("degenerate normal direction: d rho/dw vanishes at the base point")
    d0 = 1 / (2 * c_w)
    d: dict = {}
    for deg in range(1, order + 1):
        shear = Shear(d0, dict(d), n)
        cur = shifted.substitute(shear.inverse_polys(nv))
        cur_hol = _holomorphic_part(cur)
        for p in (p for p in itertools.product(range(deg + 1), repeat=n) if sum(p) == deg):
            c = cur_hol.get(tuple(p) + (0,), 0)
            if c != 0:
                d[tuple(p)] = -c / c_w
    shear = Shear(d0, d, n)
    normalized = shifted.substitute(shear.inverse_polys(nv))
    return Normalization(eta_prime, shifted, d0, d, normalized, shear)


def build_shear_Q(rho: DefiningFunction, eta_prime, order: int = 2) -> Shear:
    """Shear absorbing the pure holomorphic ``z``-terms of order ``1..order`` at ``eta_prime``.

    The coefficients come from the exact Taylor expansion of ``rho`` at
    ``eta_prime``; the ``w``-coefficient ``d0 = 1/(2 d rho/dw)`` also absorbs the
    ``Im(w)`` linear correction. The returned stage acts in local coordinates
    (after translation by ``eta_prime``).
    """
    return _normalize(rho, eta_prime, order).shear


@dataclass
class CatlinNormalization:
    base: np.ndarray
    a: dict  # (j, k) -> a_{j,k}, j, k > 0, j + k <= 2m
    d0: complex
    d: dict
    A: dict  # l -> A_l
    tau: float  # |alpha| (eps/|alpha|^(2m))^(1/2), drives the dilation
    tau_min: float  # min_l (eps/A_l)^(1/l)
    eps: float | None
    shear: Shear
    normalized: HermitianPolynomial

    def pure_residual(self) -> float:
        """Largest remaining pure ``z^k`` or ``conj(z)^k`` coefficient, ``k <= 2m`` (w = 0 slice)."""
        worst = 0.0
        for (p, q), c in self.normalized.terms.items():
            if p[-1] or q[-1]:
                continue
            if (p[0] == 0) != (q[0] == 0) and max(p[0], q[0]) <= max(self.A):
                worst = max(worst, abs(complex(c)))
        return worst


def catlin_normalize(rho: DefiningFunction, eta_prime, two_m: int, eps: float | None = None) -> CatlinNormalization:
    """Normalize at ``eta_prime`` in ``C^2`` up to order ``2m``; emit ``a_{j,k}``, ``A_l`` and ``tau``.

    ``a_{j,k}`` are the Taylor coefficients of the normalized function (so the
    limit model reads ``Re(w) + a |z|^2`` with ``a = lim a_{1,1} tau^2 / eps``).
    ``tau`` is ``|alpha| (eps/|alpha|^(2m))^(1/2)``; the minimum of
    ``(eps/A_l)^(1/l)`` over ``l`` is kept as ``tau_min``. Both are comparable
    along spherically tangential sequences.
    """
    if rho.n != 1:
        raise ScalingError("the order-2m normalization is implemented in dimension 2")
    if two_m < 2:
        raise ScalingError("2m must be at least 2")
    norm = _normalize(rho, eta_prime, two_m)
    a = {}
    for (p, q), c in norm.normalized.terms.items():
        if p[1] or q[1]:
            continue
        j, k = p[0], q[0]
        if j > 0 and k > 0 and j + k <= two_m:
            a[(j, k)] = complex(c)
    A = {l: max((abs(v) for (j, k), v in a.items() if j + k == l), default=0.0) for l in range(2, two_m + 1)}
    tau = tau_min = float("nan")
    if eps is not None:
        cands = [(eps / A_l) ** (1.0 / l) for l, A_l in A.items() if A_l > 0]
        if not cands:
            raise ScalingError("all A_l vanish: the point is not of finite type 2m")
        tau_min = min(cands)
        tau = float(tau_multitype(norm.base[:1], eps, [two_m // 2])[0])
    return CatlinNormalization(norm.base, a, norm.d0, norm.d, A, tau, tau_min, eps, norm.shear, norm.normalized)


def tau_multitype(alpha, eps: float, m: Multiweight | Sequence[int]) -> np.ndarray:
    """``tau_k = |alpha_k| (eps / |alpha_k|^(2 m_k))^(1/2)``."""
    mm = m.m if isinstance(m, Multiweight) else tuple(m)
    a = np.abs(_pts(alpha))
    if np.any(a == 0):
        raise ScalingError("tangential component vanishes: the sequence is not tangential")
    if eps <= 0:
        raise ScalingError("eps must be positive")
    return a * np.sqrt(eps / a ** (2 * np.array(mm)))


def hessian_diagonalize(A) -> tuple[np.ndarray, np.ndarray]:
    """Unitary ``U`` and descending ``lambda`` with ``U* A U = diag(lambda)``.

    Column phases are fixed so the first non-negligible entry is real positive;
    equal eigenvalues are ordered by comparing ``|U|`` columns lexicographically.
    """
    A = np.asarray(A, dtype=complex)
    if not np.allclose(A, A.conj().T, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ScalingError("matrix is not Hermitian")
    w, U = np.linalg.eigh(0.5 * (A + A.conj().T))
    if w[0] <= 0:
        raise ScalingError(f"non-positive eigenvalue {w[0]:.3g}: limit Hessian is not positive definite")
    for k in range(U.shape[1]):
        col = U[:, k]
        idx = int(np.argmax(np.abs(col) > 1e-12))
        U[:, k] = col * np.exp(-1j * np.angle(col[idx]))
    tol = 1e-10 * w[-1]
    order = sorted(range(len(w)), key=lambda k: (-round(w[k] / tol) if tol else -w[k], tuple(-np.abs(U[:, k]))))
    return U[:, order], w[order]


# -- the two rescaling pipelines ----------------------------------------------

@dataclass
class RescalingResult:
    eta: np.ndarray
    eta_prime: np.ndarray
    eps: float
    tau: np.ndarray
    tangential: ScalingPipeline  # translation, shear, dilation
    full: ScalingPipeline  # tangential + unitary + stretch + Cayley
    rho_j: HermitianPolynomial  # eps^-1 rho o tangential^-1
    hessian: np.ndarray  # rescaled limit Hessian at this j
    lambdas: np.ndarray
    extra: dict = field(default_factory=dict)


def _limit_hessian(rho_j: HermitianPolynomial, n: int) -> np.ndarray:
    origin = np.zeros(n + 1, dtype=complex)
    return levi_form(rho_j, origin)[:n, :n]


def pushforward_defining(rho: DefiningFunction, pipeline: ScalingPipeline, eps: float) -> HermitianPolynomial:
    """Exact polynomial ``eps^-1 * rho o pipeline^-1`` (polynomial stages only)."""
    poly = rho.body
    nv = rho.n + 1
    for st in pipeline.stages:
        if not st.polynomial:
            raise ScalingError(f"{st.kind} stage is not polynomial; measure it pointwise instead")
        poly = poly.substitute(st.inverse_polys(nv))
    poly = poly * (1.0 / eps)
    # clear coefficients that are pure round-off relative to the largest one
    cut = 1e-15 * poly.max_abs_coeff()
    return poly.filter(lambda p, q: abs(complex(poly.terms[(p, q)])) > cut)


def _finish(rho, eta, eta_prime, eps, tau, shear, unitary_from=None, extra=None) -> RescalingResult:
    n = rho.n
    tangential = ScalingPipeline([Translation(eta_prime), shear, Dilation(tau, eps)])
    rho_j = pushforward_defining(rho, tangential, eps)
    H = _limit_hessian(rho_j, n)
    U, lam = hessian_diagonalize(H if unitary_from is None else unitary_from)
    # Theta must carry sum H_kl z_k conj(z_l) to sum lambda_k |z_k|^2: z' = U^T z
    stages = tangential.stages + [Unitary(U.T), DiagonalStretch(lam), Cayley()]
    return RescalingResult(_pts(eta), eta_prime, eps, np.asarray(tau, dtype=float), tangential,
                           ScalingPipeline(stages), rho_j, H, lam, extra or {})


def rescale_multitype(rho: DefiningFunction, eta, weights: Multiweight | None = None) -> RescalingResult:
    """Pipeline ``Psi o stretch o Theta o dilation o Q o translation`` for a tangential sequence point."""
    weights = weights or rho.weights
    if weights is None:
        raise ScalingError("multiweight required")
    eps, eta_prime = drop_to_boundary(rho, eta)
    tau = tau_multitype(eta_prime[:-1], eps, weights)
    shear = build_shear_Q(rho, eta_prime, order=2)
    return _finish(rho, eta, eta_prime, eps, tau, shear)


def rescale_finite_type(rho: DefiningFunction, eta, two_m: int) -> RescalingResult:
    """Dimension-2 pipeline with the order-2m normalization.

    The dilation uses ``tau = |alpha| (eps/|alpha|^(2m))^(1/2)``; the minimum
    over ``(eps/A_l)^(1/l)`` is kept in ``extra['tau_min']``.
    """
    eps, eta_prime = drop_to_boundary(rho, eta)
    cat = catlin_normalize(rho, eta_prime, two_m, eps)
    return _finish(rho, eta, eta_prime, eps, [cat.tau], cat.shear,
                   extra={"tau_min": cat.tau_min, "A": cat.A, "a": cat.a, "d0": cat.d0, "d": cat.d,
                          "pure_residual": cat.pure_residual()})


def limit_model(H: np.ndarray) -> HermitianPolynomial:
    """``Re(w) + sum H_kl z_k conj(z_l)``."""
    n = H.shape[0]
    nv = n + 1
    w = _var(nv, n)
    poly = (w + w.conjugate()) * 0.5
    for k in range(n):
        for l in range(n):
            if H[k, l] != 0:
                poly = poly + _var(nv, k) * _var(nv, l).conjugate() * complex(H[k, l])
    return poly


def default_gap_grid(nv: int, radius: float = 2.0, per_axis: int | None = None) -> np.ndarray:
    """Lattice points of the real cube intersected with the ball of given radius."""
    per_axis = per_axis or (9 if nv <= 2 else 5)
    ax = np.linspace(-radius, radius, per_axis)
    grid = np.array(list(itertools.product(ax, repeat=2 * nv)))
    grid = grid[np.linalg.norm(grid, axis=1) <= radius + 1e-12]
    return grid[:, :nv] + 1j * grid[:, nv:]


def normal_convergence_gap(rho_j: HermitianPolynomial, rho_hat: HermitianPolynomial, grid=None) -> float:
    """``max |rho_j - rho_hat|`` over the grid."""
    if grid is None:
        grid = default_gap_grid(rho_j.n)
    diff = rho_j - rho_hat
    if not diff:
        return 0.0
    return float(np.max(np.abs(np.real(diff.eval(grid)))))


def lemma_lower_bound(P: HermitianPolynomial, alpha, eps: float, weights: Multiweight) -> float:
    """Largest ``c`` with ``eps^-1 sum P_kl(alpha) tau_k tau_l w_k conj(w_l) >= c sum m_k^2 |w_k|^2``."""
    tau = tau_multitype(alpha, eps, weights)
    L = levi_form(P, _pts(alpha)) * np.outer(tau, tau) / eps
    Minv = np.diag(1.0 / np.array(weights.m, dtype=float))
    return float(np.linalg.eigvalsh(Minv @ L @ Minv)[0])
