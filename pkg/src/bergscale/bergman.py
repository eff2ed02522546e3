"""Diagonal Bergman kernels: closed form, monomial series, sampled Gram matrix.

Every engine exposes ``kernel_diag(z)`` and ``log_kernel(z, depth=None)``;
the optional ``depth`` lets callers pass ``1 - sum |z|^(2p)`` computed without
cancellation for points very close to the boundary.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.special import gammaln
from scipy.stats import t as student_t

from . import _backend
from .domains import ModelDomain


class KernelError(RuntimeError):
    pass


def _as_points(z) -> tuple[np.ndarray, bool]:
    z = np.asarray(z, dtype=complex)
    single = z.ndim == 1
    return np.atleast_2d(z), single


def _unwrap(values, single):
    return float(values[0]) if single else values


def ball_kernel_diag(N: int, z) -> float | np.ndarray:
    """``N!/pi^N (1 - |z|^2)^-(N+1)`` on the unit ball of ``C^N``."""
    pts, single = _as_points(z)
    if pts.shape[1] != N:
        raise KernelError(f"point dimension {pts.shape[1]} != {N}")
    r2 = np.sum(np.abs(pts) ** 2, axis=1)
    if np.any(r2 >= 1):
        raise KernelError("point outside the open ball")
    val = math.factorial(N) / math.pi ** N * (1 - r2) ** (-(N + 1))
    return _unwrap(val, single)


def _exponents(domain: ModelDomain) -> tuple[int, ...]:
    if domain.kind == "ball":
        return (1,) * domain.N
    if domain.kind == "ellipsoid":
        return domain.exponents
    raise KernelError(f"{domain.kind} is not a bounded Reinhardt domain")


def log_reinhardt_norm(p: Sequence[int], k: Sequence[int]) -> float:
    """``log ||zeta^k||^2`` on ``{sum |zeta_j|^(2 p_j) < 1}``."""
    s = [(kj + 1) / pj for kj, pj in zip(k, p)]
    return (len(p) * math.log(math.pi) + sum(gammaln(sj) - math.log(pj) for sj, pj in zip(s, p))
            - gammaln(1 + sum(s)))


def reinhardt_norm(domain: ModelDomain, k: Sequence[int]) -> float:
    """Squared L2 norm of the monomial ``zeta^k`` (closed Gamma-function form)."""
    p = _exponents(domain)
    if len(k) != len(p) or min(k) < 0:
        raise KernelError("multi-index must be non-negative with one entry per coordinate")
    return math.exp(log_reinhardt_norm(p, k))


def reinhardt_norm_quadrature(domain: ModelDomain, k: Sequence[int], tol: float = 1e-11) -> float:
    """Same integral by nested adaptive quadrature over the moduli ``r_j``."""
    p = _exponents(domain)
    n = len(p)

    def integrand(*r):
        return np.prod([2 * np.pi * rj ** (2 * kj + 1) for rj, kj in zip(r, k)])

    def bounds_for(j):
        def bound(*outer):
            # outer holds r_{j+1}, ..., r_{n-1} (nquad passes the remaining variables)
            used = sum(rr ** (2 * pp) for rr, pp in zip(outer, p[j + 1:]))
            return [0.0, max(1.0 - used, 0.0) ** (1.0 / (2 * p[j]))]
        return bound

    val, _ = integrate.nquad(integrand, [bounds_for(j) for j in range(n)],
                             opts={"epsabs": 0.0, "epsrel": tol, "limit": 200})
    return float(val)


class KernelEngine:
    """Common interface; subclasses implement :meth:`log_kernel`."""

    dim: int
    strategy: str = ""

    def log_kernel(self, z, depth=None):
        raise NotImplementedError

    def kernel_diag(self, z, depth=None):
        return np.exp(self.log_kernel(z, depth))

    def contains(self, z) -> np.ndarray:
        raise NotImplementedError

    def metadata(self) -> dict:
        return {"strategy": self.strategy, "dim": self.dim}


class ClosedFormBall(KernelEngine):
    strategy = "closed-form-ball"

    def __init__(self, N: int):
        self.N = self.dim = int(N)
        self.domain = ModelDomain.ball(self.N)

    def contains(self, z):
        return np.sum(np.abs(np.atleast_2d(z)) ** 2, axis=1) < 1

    def log_kernel(self, z, depth=None):
        pts, single = _as_points(z)
        if depth is None:
            depth = 1 - np.sum(np.abs(pts) ** 2, axis=1)
        depth = np.atleast_1d(np.asarray(depth, dtype=float))
        if np.any(depth <= 0):
            raise KernelError("point outside the open ball")
        val = math.lgamma(self.N + 1) - self.N * math.log(math.pi) - (self.N + 1) * np.log(depth)
        return _unwrap(val, single)


@dataclass
class SeriesResult:
    value: np.ndarray
    tail: np.ndarray
    degree: int
    route: str


class ReinhardtSeries(KernelEngine):
    """Kernel of ``{sum |zeta_j|^(2 p_j) < 1}`` from monomial norms.

    ``degree`` is an integer truncation degree, ``"inf"`` for the exact
    resummed series (a one-dimensional Laplace-type integral per point), or
    ``"auto"``: truncated series of growing degree up to ``max_degree``, and the
    resummed form beyond that.
    """

    strategy = "reinhardt-series"

    def __init__(self, domain: ModelDomain, degree: int | str = 40, *, tail_tol: float = 1e-8,
                 max_degree: int = 160, quad_step: float = 0.1):
        self.domain = domain
        self.p = _exponents(domain)
        self.dim = len(self.p)
        if isinstance(degree, str) and degree not in ("inf", "auto"):
            raise KernelError(f"unknown degree spec {degree!r}")
        self.degree = degree
        self.tail_tol = tail_tol
        self.max_degree = max_degree
        self.quad_step = quad_step
        self._tables: dict = {}
        self.last_route = None

    def metadata(self):
        return {"strategy": self.strategy, "dim": self.dim, "exponents": list(self.p), "degree": self.degree}

    def contains(self, z):
        pts = np.atleast_2d(np.asarray(z, dtype=complex))
        return np.sum(np.abs(pts) ** (2 * np.array(self.p)), axis=1) < 1

    def volume(self) -> float:
        return reinhardt_norm(self.domain, (0,) * self.dim)

    def _table(self, D: int):
        if D not in self._tables:
            exps = [k for k in itertools.product(range(D + 1), repeat=self.dim) if sum(k) <= D]
            exps = np.array(exps, dtype=np.int64).reshape(-1, self.dim)
            logn = np.array([log_reinhardt_norm(self.p, k) for k in exps])
            self._tables[D] = (exps, logn, exps.sum(axis=1).astype(np.int64))
        return self._tables[D]

    def truncated(self, z, D: int) -> SeriesResult:
        """Series truncated at total degree ``D`` with a geometric tail estimate."""
        pts, _ = _as_points(z)
        x = np.ascontiguousarray(np.abs(pts) ** 2)
        exps, logn, deg = self._table(D)
        total, shells = _backend.ellipsoid_series(x, exps, logn, deg, D)
        tail = np.zeros_like(total)
        if D >= 2:
            last, prev = shells[:, D], shells[:, D - 1]
            with np.errstate(divide="ignore", invalid="ignore"):
                q = np.where(prev > 0, last / prev, 0.0)
            q = np.clip(q, 0.0, None)
            tail = np.where(q < 1, last * q / np.where(q < 1, 1 - q, 1.0), np.inf)
        return SeriesResult(total, tail, D, "truncated")

    def resummed_log(self, z, depth=None) -> np.ndarray:
        pts, _ = _as_points(z)
        x = np.ascontiguousarray(np.abs(pts) ** 2)
        if depth is None:
            depth = 1 - np.sum(x ** np.array(self.p), axis=1)
        depth = np.array(np.broadcast_to(np.asarray(depth, dtype=float), (x.shape[0],)), order="C")
        if np.any(depth <= 0):
            raise KernelError("point outside the domain")
        return _backend.ellipsoid_log_kernel(x, depth, np.asarray(self.p, dtype=np.int64), self.quad_step)

    def log_kernel(self, z, depth=None):
        pts, single = _as_points(z)
        if self.degree == "inf":
            self.last_route = "resummed"
            return _unwrap(self.resummed_log(pts, depth), single)
        if self.degree == "auto":
            if depth is not None and np.min(depth) < 1e-3:
                self.last_route = "resummed"
                return _unwrap(self.resummed_log(pts, depth), single)
            D = 20
            while D <= self.max_degree:
                res = self.truncated(pts, D)
                if np.all(res.tail <= self.tail_tol * res.value):
                    self.last_route = f"truncated:{D}"
                    return _unwrap(np.log(res.value), single)
                D *= 2
            self.last_route = "resummed"
            return _unwrap(self.resummed_log(pts, depth), single)
        res = self.truncated(pts, int(self.degree))
        if np.any(~(res.tail <= self.tail_tol * res.value)):
            bad = float(np.max(res.tail / res.value))
            raise KernelError(f"truncation tail {bad:.3g} exceeds tolerance {self.tail_tol:g} at degree {self.degree}")
        self.last_route = f"truncated:{self.degree}"
        return _unwrap(np.log(res.value), single)


@dataclass
class RejectionSampler:
    """Uniform samples of ``{membership(z)}`` from a box in the real chart.

    ``lower`` and ``upper`` bound the real and imaginary parts of each
    coordinate (arrays of length ``dim``, complex: real part bounds Re, imag
    part bounds Im).
    """

    membership: Callable[[np.ndarray], np.ndarray]
    lower: np.ndarray
    upper: np.ndarray
    chunk: int = 200_000

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=complex)
        self.upper = np.asarray(self.upper, dtype=complex)

    @property
    def dim(self):
        return self.lower.shape[0]

    @property
    def box_volume(self) -> float:
        d = self.upper - self.lower
        return float(np.prod(d.real) * np.prod(d.imag))

    def draw(self, count: int, rng: np.random.Generator):
        """Return ``(samples, accepted, drawn)``."""
        kept, drawn = [], 0
        have = 0
        while have < count:
            re = rng.uniform(self.lower.real, self.upper.real, size=(self.chunk, self.dim))
            im = rng.uniform(self.lower.imag, self.upper.imag, size=(self.chunk, self.dim))
            z = re + 1j * im
            ok = np.asarray(self.membership(z), dtype=bool)
            drawn += self.chunk
            kept.append(z[ok])
            have += int(ok.sum())
            if drawn > 200 * max(count, self.chunk) and have == 0:
                raise KernelError("sampler never hits the domain")
        pts = np.concatenate(kept)
        # drop the overshoot from the final chunk, adjusting the draw count proportionally
        extra = pts.shape[0] - count
        if extra > 0:
            last_ok = kept[-1].shape[0]
            frac = (last_ok - extra) / last_ok
            drawn = drawn - self.chunk + int(round(frac * self.chunk))
            pts = pts[:count]
        return pts, count, drawn


def monomial_exponents(dim: int, D: int) -> np.ndarray:
    exps = [k for d in range(D + 1) for k in itertools.product(range(d + 1), repeat=dim) if sum(k) == d]
    return np.array(exps, dtype=np.int64).reshape(-1, dim)


class GramSampled(KernelEngine):
    """Kernel from a Monte-Carlo Gram matrix of monomials up to total degree ``D``.

    ``kernel_diag`` is ``m(z)^T G^{-1} conj(m(z))``; the statistical error is
    the 95% interval half-width from ``n_batches`` batch estimates.
    """

    strategy = "gram-sampled"

    def __init__(self, sampler: RejectionSampler, degree: int = 10, samples: int = 200_000, seed: int = 0,
                 n_batches: int = 20, ridge: float = 1e-12, max_condition: float = 1e12, center=None):
        self.sampler = sampler
        self.dim = sampler.dim
        self.degree = degree
        self.samples = int(samples)
        self.seed = seed
        self.n_batches = n_batches
        self.ridge = ridge
        self.max_condition = max_condition
        self.center = np.zeros(self.dim, dtype=complex) if center is None else np.asarray(center, dtype=complex)
        self.exps = monomial_exponents(self.dim, degree)
        rng = np.random.default_rng(seed)
        pts, accepted, drawn = sampler.draw(self.samples, rng)
        self.volume = sampler.box_volume * accepted / drawn
        self.acceptance = accepted / drawn
        self.drawn = drawn
        M = _backend.monomial_matrix(np.ascontiguousarray(pts - self.center), self.exps)
        self._batches = []
        sizes = np.array_split(np.arange(accepted), n_batches)
        full = np.zeros((len(self.exps), len(self.exps)), dtype=complex)
        for idx in sizes:
            Mb = M[idx]
            Gb = Mb.conj().T @ Mb
            full += Gb
            self._batches.append(Gb * (self.volume / len(idx)))
        self.gram = full * (self.volume / accepted)
        self.scale, self.factor, self.condition = self._factor(self.gram)
        self._batch_factors = [self._factor(G)[:2] for G in self._batches]

    def metadata(self):
        return {"strategy": self.strategy, "dim": self.dim, "degree": self.degree, "samples": self.samples,
                "seed": self.seed, "condition": self.condition, "volume": self.volume}

    def _factor(self, G):
        G = 0.5 * (G + G.conj().T)
        d = np.sqrt(np.real(np.diag(G)))
        if np.any(d <= 0):
            raise KernelError("degenerate Gram matrix (monomial with zero norm)")
        S = G / np.outer(d, d)
        S = S + self.ridge * np.real(np.trace(S)) / S.shape[0] * np.eye(S.shape[0])
        w = np.linalg.eigvalsh(S)
        cond = float(w[-1] / w[0]) if w[0] > 0 else np.inf
        if not cond <= self.max_condition:
            raise KernelError(f"Gram condition number {cond:.3g} above {self.max_condition:g}")
        from scipy.linalg import cho_factor

        return d, cho_factor(S, lower=True), cond

    @staticmethod
    def _quad(v, scale, factor):
        from scipy.linalg import cho_solve

        u = np.conj(v) / scale
        return np.real(np.sum(np.conj(u) * cho_solve(factor, u.T).T, axis=-1))

    def contains(self, z):
        return np.asarray(self.sampler.membership(np.atleast_2d(z)), dtype=bool)

    def _values(self, z):
        pts, single = _as_points(z)
        v = _backend.monomial_matrix(np.ascontiguousarray(pts - self.center), self.exps)
        return v, single

    def log_kernel(self, z, depth=None):
        v, single = self._values(z)
        return _unwrap(np.log(self._quad(v, self.scale, self.factor)), single)

    @property
    def volume_rel_error(self) -> float:
        """Binomial standard error of the hit-or-miss volume, relative."""
        p = self.acceptance
        return math.sqrt((1 - p) / (p * self.drawn))

    def kernel_with_error(self, z):
        """``(value, ci_halfwidth)``: 95% interval combining batch means with the volume error.

        Batches share one volume estimate, and ``K`` scales like ``1/volume``,
        so the volume term is added in quadrature.
        """
        v, single = self._values(z)
        full = self._quad(v, self.scale, self.factor)
        per = np.array([self._quad(v, s, f) for s, f in self._batch_factors])
        B = len(per)
        half = student_t.ppf(0.975, B - 1) * per.std(axis=0, ddof=1) / math.sqrt(B)
        half = np.hypot(half, 1.959963984540054 * full * self.volume_rel_error)
        return _unwrap(full, single), _unwrap(half, single)


class TransportedEngine(KernelEngine):
    """Kernel of a preimage domain ``F^{-1}(target)``: ``K(F(z)) |det F'(z)|^2``."""

    strategy = "transport"

    def __init__(self, engine: KernelEngine, F, depth_map: Callable | None = None):
        self.engine = engine
        self.F = F
        self.depth_map = depth_map
        self.dim = engine.dim

    def log_kernel(self, z, depth=None):
        pts, single = _as_points(z)
        tgt_depth = None
        if depth is not None and self.depth_map is not None:
            tgt_depth = self.depth_map(pts, depth)
        img = self.F(pts)
        val = self.engine.log_kernel(img, tgt_depth) + 2 * np.log(np.abs(self.F.jacobian_det(pts)))
        return _unwrap(np.atleast_1d(val), single)

    def contains(self, z):
        return self.engine.contains(self.F(np.atleast_2d(z)))


def transport_kernel(engine: KernelEngine, F, eta, target_depth=None) -> float:
    """``K_target(F(eta)) |det F'(eta)|^2``."""
    eta = np.asarray(eta, dtype=complex)
    img = F(eta)
    if target_depth is None and not np.all(engine.contains(img)):
        raise KernelError("F(eta) lies outside the engine's domain")
    return float(engine.kernel_diag(img, target_depth) * abs(F.jacobian_det(eta)) ** 2)


def ellipsoid_transport_engine(z_exponents: Sequence[int], degree="inf") -> TransportedEngine:
    """Kernel of ``{Re(w) + sum |z_k|^(2 p_k) < 0}`` via the map onto the bounded ellipsoid.

    ``depth`` passed to ``log_kernel`` is ``-rho`` on the unbounded model.
    """
    from .domains import EllipsoidTransport

    F = EllipsoidTransport(z_exponents)
    target = ReinhardtSeries(F.target, degree=degree)
    return TransportedEngine(target, F, depth_map=lambda pts, d: F.target_depth(pts, d))


class Identity:
    """Identity map with unit Jacobian (for transport sanity checks)."""

    def __call__(self, x):
        return np.asarray(x, dtype=complex)

    def inverse(self, x):
        return np.asarray(x, dtype=complex)

    def jacobian_det(self, x):
        x = np.asarray(x)
        return np.ones(x.shape[:-1], dtype=complex) if x.ndim > 1 else 1.0 + 0j
