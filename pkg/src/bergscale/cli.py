"""Command line entry point: ``bergscale <experiment> --config FILE``."""
from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from ._backend import BACKEND
from .config import EXPERIMENTS, ConfigError, config_hash, dump_config, list_presets, load_config, preset_dir, with_overrides
from .experiments import ExperimentError, run

log = logging.getLogger("bergscale")


def _resolve(path: str) -> Path:
    p = Path(path)
    if p.exists():
        return p
    named = preset_dir() / (path if path.endswith(".cfg") else f"{path}.cfg")
    if named.exists():
        return named
    raise ConfigError(f"no config file or preset named {path!r}")


def _versions() -> dict:
    return {"bergscale": __version__, "backend": BACKEND, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def run_one(cfg, out: Path, quiet: bool = False) -> dict:
    t0 = time.perf_counter()
    rep = run(cfg)
    elapsed = time.perf_counter() - t0
    out.mkdir(parents=True, exist_ok=True)
    table = out / f"{cfg.name}.csv"
    claims = out / f"{cfg.name}.claims.csv"
    rep.write_csv(table)
    rep.write_claims_csv(claims)
    (out / f"{cfg.name}.cfg").write_text(dump_config(cfg), encoding="utf-8")
    record = {
        "name": cfg.name,
        "experiment": cfg.experiment,
        "config": cfg.source,
        "config_sha256": config_hash(cfg),
        "seed": cfg.seed,
        "versions": _versions(),
        "seconds": round(elapsed, 3),
        "outputs": [table.name, claims.name],
        **{k: v for k, v in rep.summary().items() if k not in ("experiment", "name")},
    }
    for c in rep.claims:
        line = f"{'PASS' if c.passed else 'FAIL'} {cfg.name}:{c.name} value={c.value:.6g} target={c.target:.6g} tol={c.tol:.3g}"
        if c.note:
            line += f" ({c.note})"
        if not quiet or not c.passed:
            print(line)
    log.info("%s finished in %.2f s", cfg.name, elapsed)
    return record


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", action="append", default=None,
                        help="config file or shipped preset name (repeatable for 'all')")
    common.add_argument("--out", default="results", help="output directory (default: results)")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--jmax", type=int, default=None, help="drop indices j above this value")
    common.add_argument("--quiet", action="store_true", help="print failing claims only")
    parser = argparse.ArgumentParser(prog="bergscale", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({BACKEND})")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sub.add_parser(name, parents=[common], help=f"run a {name} config")
    sub.add_parser("all", parents=[common], help="run every given config, or every shipped preset")
    sub.add_parser("presets", help="list shipped presets")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "presets":
        for p in list_presets():
            print(p.stem)
        return 0
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        if args.command == "all":
            paths = [_resolve(c) for c in args.config] if args.config else list_presets()
        else:
            if not args.config or len(args.config) != 1:
                raise ConfigError(f"{args.command} takes exactly one --config")
            paths = [_resolve(args.config[0])]
        configs = [with_overrides(load_config(p), args.seed, args.jmax) for p in paths]
        if args.command != "all":
            if configs[0].experiment != args.command:
                raise ConfigError(f"{paths[0]} is a {configs[0].experiment} config, not {args.command}")
    except (ConfigError, ExperimentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    ok = True
    records = []
    for cfg in configs:
        log.info("running %s (%s)", cfg.name, cfg.experiment)
        try:
            rec = run_one(cfg, out, args.quiet)
        except Exception as exc:  # one broken run should not hide the others
            log.error("%s: %s: %s", cfg.name, type(exc).__name__, exc)
            rec = {"name": cfg.name, "experiment": cfg.experiment, "config": cfg.source,
                   "config_sha256": config_hash(cfg), "seed": cfg.seed, "versions": _versions(),
                   "passed": False, "error": f"{type(exc).__name__}: {exc}"}
        ok &= bool(rec["passed"])
        records.append(rec)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "manifest.jsonl", "a", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, default=str) + "\n")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
