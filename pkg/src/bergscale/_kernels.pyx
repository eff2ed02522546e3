# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for diagonal Bergman kernels of complex ellipsoids."""
import numpy as np

from cython.parallel cimport prange
from libc.math cimport exp, log, pow, tgamma, INFINITY
from scipy.special.cython_special cimport gammainc


cdef inline double _etilde(double beta, double inv_gamma_beta, double v) noexcept nogil:
    # exp(-v) * E_{1,beta}(v) for 0 < beta <= 1, written through the regularized gamma
    if beta == 1.0:
        return 1.0
    if v == 0.0:
        return inv_gamma_beta
    return exp(-v) * inv_gamma_beta + exp((1.0 - beta) * log(v)) * gammainc(beta, v)


cdef double _one_point(double[:, ::1] x, Py_ssize_t i, double depth, long[::1] p, double[:, ::1] inv_g,
                       double a, double h) noexcept nogil:
    cdef Py_ssize_t n = x.shape[1], k, m, nodes
    cdef long r, pk
    cdef double tpk, s0, s1, s, t, u, v, acc, term, lf, mx, tot, logx
    tpk = a / depth
    if tpk < 1.0:
        tpk = 1.0
    s0 = log(tpk) - 40.0 / (1.0 + a) - 10.0
    s1 = log(tpk) + log(60.0) + 5.0
    nodes = <Py_ssize_t>((s1 - s0) / h) + 1
    mx = -INFINITY
    tot = 0.0
    for m in range(nodes):
        s = s0 + m * h
        t = exp(s)
        lf = -depth * t + s
        for k in range(n):
            pk = p[k]
            if x[i, k] > 0.0:
                logx = log(x[i, k])
                u = exp(logx + s / pk)
                v = exp(pk * logx + s)
            else:
                u = 0.0
                v = 0.0
            acc = 0.0
            term = 1.0
            for r in range(1, pk + 1):
                acc += term * _etilde(<double>r / pk, inv_g[k, r], v)
                term *= u
            lf += log(<double>pk) + s / pk + log(acc)
        # streaming log-sum-exp
        if lf > mx:
            tot = tot * exp(mx - lf) + 1.0
            mx = lf
        else:
            tot += exp(lf - mx)
    return mx + log(tot * h)


def ellipsoid_log_kernel(double[:, ::1] x, double[::1] depth, long[::1] p, double h=0.1):
    """Log of the diagonal kernel of ``{sum |z_k|^(2 p_k) < 1}`` by a Laplace-type integral.

    ``x[i, k] = |z_k|^2``; ``depth[i] = 1 - sum x^p`` supplied by the caller.
    Points are processed in parallel.
    """
    cdef Py_ssize_t npts = x.shape[0], n = x.shape[1], i, k
    cdef long r
    cdef double a = 0.0, logpi = log(3.141592653589793)
    cdef long pmax = 1
    for k in range(n):
        a += 1.0 / p[k]
        if p[k] > pmax:
            pmax = p[k]
    inv_g_arr = np.zeros((n, pmax + 1))
    cdef double[:, ::1] inv_g = inv_g_arr
    for k in range(n):
        for r in range(1, p[k] + 1):
            inv_g[k, r] = 1.0 / tgamma(<double>r / p[k])
    out = np.empty(npts)
    cdef double[::1] res = out
    for i in prange(npts, nogil=True, schedule="static"):
        if depth[i] <= 0.0:
            res[i] = INFINITY
        else:
            res[i] = _one_point(x, i, depth[i], p, inv_g, a, h) - n * logpi
    return out


def ellipsoid_series(double[:, ::1] x, long[:, ::1] exps, double[::1] log_norms, long[::1] degree, long max_degree):
    """Truncated monomial series; returns ``(total, shell_sums)`` per point."""
    cdef Py_ssize_t npts = x.shape[0], n = x.shape[1], nmono = exps.shape[0]
    cdef Py_ssize_t i, k, m
    cdef double term
    total = np.zeros(npts)
    shells = np.zeros((npts, max_degree + 1))
    cdef double[::1] tot = total
    cdef double[:, ::1] sh = shells
    for i in prange(npts, nogil=True, schedule="static"):
        for m in range(nmono):
            term = exp(-log_norms[m])
            for k in range(n):
                if exps[m, k] > 0:
                    term = term * pow(x[i, k], <double>exps[m, k])
            sh[i, degree[m]] += term
            tot[i] += term
    return total, shells


def monomial_matrix(double complex[:, ::1] z, long[:, ::1] exps):
    """``out[i, a] = prod_k z[i, k] ** exps[a, k]``."""
    cdef Py_ssize_t npts = z.shape[0], n = z.shape[1], nmono = exps.shape[0]
    cdef Py_ssize_t i, a, k, e
    cdef double complex val
    out = np.empty((npts, nmono), dtype=np.complex128)
    cdef double complex[:, ::1] res = out
    with nogil:
        for i in range(npts):
            for a in range(nmono):
                val = 1.0
                for k in range(n):
                    for e in range(exps[a, k]):
                        val = val * z[i, k]
                res[i, a] = val
    return out
