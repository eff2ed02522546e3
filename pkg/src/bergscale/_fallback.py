"""Pure numpy versions of the compiled kernel loops (same signatures)."""
import numpy as np
from scipy.special import gamma, gammainc


def _etilde(beta, v):
    if beta == 1.0:
        return np.ones_like(v)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.exp(-v) / gamma(beta) + v ** (1.0 - beta) * gammainc(beta, v)
    return np.where(v == 0.0, 1.0 / gamma(beta), out)


def ellipsoid_log_kernel(x, depth, p, h=0.1):
    x = np.ascontiguousarray(x, dtype=float)
    depth = np.ascontiguousarray(depth, dtype=float)
    p = np.asarray(p, dtype=np.int64)
    n = x.shape[1]
    a = float(np.sum(1.0 / p))
    out = np.full(x.shape[0], np.inf)
    for i in range(x.shape[0]):
        if depth[i] <= 0:
            continue
        tpk = max(a / depth[i], 1.0)
        s0 = np.log(tpk) - 40.0 / (1.0 + a) - 10.0
        s1 = np.log(tpk) + np.log(60.0) + 5.0
        s = s0 + h * np.arange(int((s1 - s0) / h) + 1)
        t = np.exp(s)
        logf = -depth[i] * t + s
        for k in range(n):
            pk = int(p[k])
            u = x[i, k] * t ** (1.0 / pk)
            v = x[i, k] ** pk * t
            acc = np.zeros_like(t)
            term = np.ones_like(t)
            for r in range(1, pk + 1):
                acc += term * _etilde(r / pk, v)
                term = term * u
            logf += np.log(pk) + s / pk + np.log(acc)
        mx = logf.max()
        out[i] = mx + np.log(np.exp(logf - mx).sum() * h) - n * np.log(np.pi)
    return out


def ellipsoid_series(x, exps, log_norms, degree, max_degree):
    x = np.asarray(x, dtype=float)
    # 0 ** 0 = 1: zero exponents contribute nothing even where log x = -inf
    with np.errstate(divide="ignore", invalid="ignore"):
        logx = np.log(x)
        expo = np.where(exps[None, :, :] > 0, exps[None, :, :] * logx[:, None, :], 0.0).sum(axis=2)
    terms = np.exp(expo - log_norms[None, :])
    shells = np.zeros((x.shape[0], max_degree + 1))
    for d in range(max_degree + 1):
        shells[:, d] = terms[:, degree == d].sum(axis=1)
    return terms.sum(axis=1), shells


def monomial_matrix(z, exps):
    z = np.asarray(z, dtype=complex)
    return np.prod(z[:, None, :] ** exps[None, :, :], axis=2)
