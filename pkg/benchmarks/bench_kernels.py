"""Time the compiled kernel loops against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each case runs both implementations on identical inputs, checks that they
agree and reports the best wall time of ``--repeat`` runs.
"""
import argparse
import itertools
import json
import timeit

import numpy as np

from bergscale import _fallback

try:
    from bergscale import _kernels
except ImportError:  # extension not built
    _kernels = None


def _cases(rng):
    x = rng.uniform(0.0, 0.8, size=(400, 2))
    depth = rng.uniform(1e-6, 1e-2, size=400)
    p = np.array([2, 3], dtype=np.int64)
    yield "ellipsoid_log_kernel", (x, depth, p, 0.1)

    D = 40
    exps = np.array([e for e in itertools.product(range(D + 1), repeat=2) if sum(e) <= D], dtype=np.int64)
    degree = exps.sum(axis=1).astype(np.int64)
    log_norms = rng.normal(size=len(exps))
    xs = rng.uniform(0.0, 0.9, size=(2000, 2))
    yield "ellipsoid_series", (xs, exps, log_norms, degree, D)

    z = rng.normal(size=(20000, 2)) + 1j * rng.normal(size=(20000, 2))
    exps10 = np.array([e for e in itertools.product(range(11), repeat=2) if sum(e) <= 10], dtype=np.int64)
    yield "monomial_matrix", (np.ascontiguousarray(z * 0.5), exps10)


def _agree(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    return max(float(np.max(np.abs(u - v) / np.maximum(1.0, np.abs(v)))) for u, v in zip(a, b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None, help="also write the results as JSON lines")
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    rows = []
    print(f"{'kernel':24s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s} {'max rel diff':>13s}")
    for name, inputs in _cases(rng):
        py = getattr(_fallback, name)
        t_py = min(timeit.repeat(lambda: py(*inputs), number=1, repeat=args.repeat))
        row = {"kernel": name, "python_ms": 1e3 * t_py, "cython_ms": None, "speedup": None, "max_rel_diff": None}
        if _kernels is not None:
            cy = getattr(_kernels, name)
            t_cy = min(timeit.repeat(lambda: cy(*inputs), number=1, repeat=args.repeat))
            row.update(cython_ms=1e3 * t_cy, speedup=t_py / t_cy, max_rel_diff=_agree(cy(*inputs), py(*inputs)))
        rows.append(row)
        fmt = lambda v, spec: "n/a" if v is None else format(v, spec)
        print(f"{name:24s} {row['python_ms']:12.2f} {fmt(row['cython_ms'], '12.2f'):>12s} "
              f"{fmt(row['speedup'], '8.1f'):>8s} {fmt(row['max_rel_diff'], '13.2e'):>13s}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")


if __name__ == "__main__":
    main()
