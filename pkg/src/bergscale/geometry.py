"""Bergman metric and curvature by finite differences of ``log K``.

Derivatives are taken on the real ``2N``-dimensional chart with products of
second-order central stencils, improved by one Richardson step, and then
converted to Wirtinger derivatives with ``d/dz = (d/dx - i d/dy)/2``.

A *potential* is anything with a ``log_kernel(points)`` method (every kernel
engine qualifies) or a plain callable ``points -> log K``. ``scales`` lets the
caller work in a chart ``z = z0 + diag(scales) u`` where the potential varies on
unit scale; tensors are converted back to ``z`` coordinates on return.
"""
from __future__ import annotations

import csv
import itertools
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class GeometryError(RuntimeError):
    pass


_STENCILS = {
    1: {-1: -0.5, 1: 0.5},
    2: {-1: 1.0, 0: -2.0, 1: 1.0},
    3: {-2: -0.5, -1: 1.0, 1: -1.0, 2: 0.5},
    4: {-2: 1.0, -1: -4.0, 0: 6.0, 1: -4.0, 2: 1.0},
}


def _as_callable(potential) -> Callable[[np.ndarray], np.ndarray]:
    if hasattr(potential, "log_kernel"):
        return lambda pts: np.atleast_1d(potential.log_kernel(pts))
    if callable(potential):
        return lambda pts: np.atleast_1d(potential(pts))
    raise TypeError("potential must be a kernel engine or a callable")


def _stencil_weights(multiset: tuple[int, ...], nreal: int):
    """Integer offsets and weights (for unit step) of a product stencil."""
    counts = Counter(multiset)
    axes = sorted(counts)
    per_axis = [list(_STENCILS[counts[a]].items()) for a in axes]
    out = []
    for combo in itertools.product(*per_axis):
        off = [0] * nreal
        w = 1.0
        for a, (o, c) in zip(axes, combo):
            off[a] = o
            w *= c
        out.append((tuple(off), w))
    return out


class _Differentiator:
    """All real partial derivatives of orders 2..max_order at one point."""

    def __init__(self, f, x0: np.ndarray, scales: np.ndarray, h: float, max_order: int):
        self.N = x0.shape[0]
        self.nreal = 2 * self.N
        self.f = f
        self.x0 = x0
        self.scales = scales
        self.h = h
        self.max_order = max_order
        self.multisets = {k: list(itertools.combinations_with_replacement(range(self.nreal), k))
                          for k in range(1, max_order + 1)}
        self.stencils = {ms: _stencil_weights(ms, self.nreal)
                         for k in self.multisets for ms in self.multisets[k]}
        offsets = sorted({o for st in self.stencils.values() for o, _ in st})
        self.offsets = offsets
        self.index = {o: i for i, o in enumerate(offsets)}

    def points(self, step: float) -> np.ndarray:
        off = np.array(self.offsets, dtype=float) * step
        u = off[:, : self.N] + 1j * off[:, self.N:]
        return self.x0 + u * self.scales

    def partials(self, values: np.ndarray, step: float) -> dict:
        out = {}
        for ms, st in self.stencils.items():
            acc = 0.0
            for o, w in st:
                acc += w * values[self.index[o]]
            out[ms] = acc / step ** len(ms)
        return out

    def run(self):
        pts = np.concatenate([self.points(self.h), self.points(self.h / 2)])
        vals = np.asarray(self.f(pts), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise GeometryError("potential not finite on the stencil (insufficient boundary margin)")
        m = len(self.offsets)
        coarse = self.partials(vals[:m], self.h)
        fine = self.partials(vals[m:], self.h / 2)
        rich = {k: (4 * fine[k] - coarse[k]) / 3 for k in coarse}
        err = {k: abs(rich[k] - fine[k]) for k in coarse}
        return rich, err

    def tensor(self, partials: dict, order: int) -> np.ndarray:
        T = np.zeros((self.nreal,) * order)
        for ms in self.multisets[order]:
            v = partials[ms]
            for perm in set(itertools.permutations(ms)):
                T[perm] = v
        return T


def _wirtinger(N: int):
    Wz = np.zeros((N, 2 * N), dtype=complex)
    for k in range(N):
        Wz[k, k] = 0.5
        Wz[k, N + k] = -0.5j
    return Wz, np.conj(Wz)


@dataclass
class MetricTensor:
    point: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    fd_step: float
    error: float

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.g)[0])


@dataclass
class CurvatureTensor:
    point: np.ndarray
    R: np.ndarray
    metric: MetricTensor
    stencil: str
    fd_step: float
    error: float = 0.0
    extra: dict = field(default_factory=dict)

    def symmetry_defect(self) -> float:
        """Relative violation of ``R_{h j k l} = conj(R_{j h l k})``."""
        other = np.conj(np.transpose(self.R, (1, 0, 3, 2)))
        return float(np.max(np.abs(self.R - other)) / max(np.max(np.abs(self.R)), 1e-300))


def _prepare(potential, z, scales, h):
    z = np.asarray(z, dtype=complex)
    N = z.shape[0]
    scales = np.ones(N) if scales is None else np.asarray(scales, dtype=float)
    if scales.shape != (N,) or np.any(scales <= 0):
        raise GeometryError("scales must be positive, one per coordinate")
    return _as_callable(potential), z, N, scales


def _check_engine_margin(potential, pts):
    if hasattr(potential, "contains"):
        try:
            inside = potential.contains(pts)
        except NotImplementedError:
            return
        if not np.all(inside):
            raise GeometryError("finite-difference stencil leaves the domain; reduce the step")


def _metric_from(d2, N, z, h, err2, scales) -> MetricTensor:
    Wz, Wzb = _wirtinger(N)
    g = np.einsum("ka,lb,ab->kl", Wz, Wzb, d2)
    g = 0.5 * (g + g.conj().T)
    S = np.outer(1 / scales, 1 / scales)
    g = g * S
    w = np.linalg.eigvalsh(g)
    if w[0] < 1e-10:
        raise GeometryError(f"metric not positive definite (smallest eigenvalue {w[0]:.3g})")
    return MetricTensor(z, g, np.linalg.inv(g), h, float(np.max(err2)) * float(S.max()))


def metric_at(potential, z, h: float | None = None, scales: Sequence[float] | None = None) -> MetricTensor:
    """``g_{jk} = d^2 log K / dz_j dconj(z_k)`` at ``z``."""
    f, z, N, scales = _prepare(potential, z, scales, h)
    if h is None:
        h = 1e-3 * (1 + (np.linalg.norm(z) if np.all(scales == 1) else 0.0))
    diff = _Differentiator(f, z, scales, h, 2)
    _check_engine_margin(potential, diff.points(h))
    partials, err = diff.run()
    d2 = diff.tensor(partials, 2)
    e2 = diff.tensor(err, 2)
    return _metric_from(d2, N, z, h, e2, scales)


def metric_length(gt: MetricTensor, xi) -> float:
    """``sum g_{jk} xi_j conj(xi_k)``."""
    xi = np.asarray(xi, dtype=complex)
    if not np.any(xi):
        raise GeometryError("zero tangent vector")
    return float(np.real(xi @ gt.g @ np.conj(xi)))


def curvature_at(potential, z, h: float | None = None, scales: Sequence[float] | None = None,
                 symmetry_tol: float = 1e-4) -> CurvatureTensor:
    """Curvature ``R_{i j k l} = -d_k dbar_l g_{i j} + g^{p q} d_k g_{i q} dbar_l g_{p j}``."""
    f, z, N, scales = _prepare(potential, z, scales, h)
    if h is None:
        h = 1e-2
    diff = _Differentiator(f, z, scales, h, 4)
    _check_engine_margin(potential, diff.points(h))
    partials, err = diff.run()
    T2, T3, T4 = (diff.tensor(partials, k) for k in (2, 3, 4))
    Wz, Wzb = _wirtinger(N)
    s = 1 / scales
    metric = _metric_from(T2, N, z, h, diff.tensor(err, 2), scales)
    # dg[m, i, j] = d_m g_{i jbar}
    dg = np.einsum("ma,ib,jc,abc->mij", Wz, Wz, Wzb, T3) * np.einsum("m,i,j->mij", s, s, s)
    # ddg[i, j, k, l] = d_k dbar_l g_{i jbar}
    ddg = np.einsum("ia,jb,kc,ld,abcd->ijkl", Wz, Wzb, Wz, Wzb, T4) * np.einsum("i,j,k,l->ijkl", s, s, s, s)
    ginv = metric.g_inv
    # g^{p qbar} = ginv[q, p]; dbar_l g_{p jbar} = conj(d_l g_{j pbar})
    R = -ddg + np.einsum("qp,kiq,ljp->ijkl", ginv, dg, np.conj(dg))
    e4 = float(np.max(diff.tensor(err, 4))) * float(s.max() ** 4)
    ct = CurvatureTensor(z, R, metric, "central-2nd-order-product+richardson", h, e4)
    if ct.symmetry_defect() > symmetry_tol:
        raise GeometryError(f"curvature symmetry violated: {ct.symmetry_defect():.3g}")
    return ct


def _quartic(R, X, Y):
    return np.einsum("ijkl,i,j,k,l->", R, X, np.conj(X), Y, np.conj(Y))


def sectional(gt: MetricTensor, R: CurvatureTensor | np.ndarray, X) -> float:
    """Holomorphic sectional curvature ``2 R(X, X, X, X) / g(X, X)^2`` (ball of ``C^N``: ``-4/(N+1)``)."""
    R = R.R if isinstance(R, CurvatureTensor) else R
    X = np.asarray(X, dtype=complex)
    gx = metric_length(gt, X)
    return float(2 * np.real(_quartic(R, X, X)) / gx ** 2)


def orthonormal_frame(gt: MetricTensor) -> np.ndarray:
    """Columns ``E_j`` with ``g(E_a, E_b) = delta_ab`` (Gram-Schmidt on the coordinate frame)."""
    N = gt.g.shape[0]
    frame = []
    for k in range(N):
        v = np.zeros(N, dtype=complex)
        v[k] = 1.0
        for e in frame:
            v = v - (v @ gt.g @ np.conj(e)) * e
        v = v / np.sqrt(metric_length(gt, v))
        frame.append(v)
    return np.array(frame).T


def ricci(gt: MetricTensor, R: CurvatureTensor | np.ndarray, X) -> float:
    """``sum_j R(E_j, E_j, X, X) / g(X, X)`` over a g-orthonormal frame (ball: ``-1``)."""
    R = R.R if isinstance(R, CurvatureTensor) else R
    X = np.asarray(X, dtype=complex)
    gx = metric_length(gt, X)
    E = orthonormal_frame(gt)
    total = sum(_quartic(R, E[:, a], X) for a in range(E.shape[1]))
    return float(np.real(total) / gx)


def scalar(gt: MetricTensor, R: CurvatureTensor | np.ndarray) -> float:
    """``g^{i j} g^{k l} R_{i j k l}`` (ball of ``C^N``: ``-N``)."""
    R = R.R if isinstance(R, CurvatureTensor) else R
    ginv = gt.g_inv
    return float(np.real(np.einsum("ji,lk,ijkl->", ginv, ginv, R)))


def ball_metric(z) -> np.ndarray:
    """Closed-form Bergman metric of the unit ball."""
    z = np.asarray(z, dtype=complex)
    N = z.shape[0]
    d = 1 - np.vdot(z, z).real
    return (N + 1) * (np.eye(N) / d + np.outer(np.conj(z), z) / d ** 2)


def ball_curvature(z) -> np.ndarray:
    """Closed-form curvature tensor of the ball: ``-(g_ij g_kl + g_il g_kj)/(N+1)``."""
    g = ball_metric(z)
    N = g.shape[0]
    return -(np.einsum("ij,kl->ijkl", g, g) + np.einsum("il,kj->ijkl", g, g)) / (N + 1)


@dataclass
class CurvatureRow:
    point: np.ndarray
    direction: np.ndarray
    sec: float
    ric: float
    scal: float
    error: float
    engine: str


def curvature_report(rows: Sequence[CurvatureRow], path) -> None:
    """Write rows as CSV: point, direction, Sec, Ric, Scal, error estimate, engine metadata."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["point", "direction", "sec", "ric", "scal", "fd_error", "engine"])
        for r in rows:
            w.writerow([" ".join(repr(complex(v)) for v in r.point), " ".join(repr(complex(v)) for v in r.direction),
                        repr(r.sec), repr(r.ric), repr(r.scal), repr(r.error), r.engine])
