"""INI-style run configuration.

A config file has the sections ``[experiment]``, ``[domain]``, ``[sequence]``,
``[engine]``, ``[run]``, ``[claims]`` and ``[thresholds]``::

    [experiment]
    name = ellipsoid-kernel
    kind = kernel-asym
    pipeline = multitype

    [domain]
    kind = model
    polynomial = z1^2*zb1^2 + z2^3*zb2^3
    weights = 2, 3

    [sequence]
    alpha = j^(-1/4); j^(-1/6)
    beta = -2/j - 1/j^2

    [run]
    js = 2^4..2^12

    [claims]
    kernel_exponent = 41/12

Sequence components are separated by ``;``.  ``js`` is either ``b^p..b^q``
(every power of ``b`` in between) or a comma list of integers.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
import math
import re
from pathlib import Path

from .experiments import CLAIMS, DomainSpec, EngineSpec, ExperimentConfig, ExperimentError, SequenceSpec
from .sequences import Thresholds

EXPERIMENTS = ("check-domain", "sequence-report", "kernel-asym", "metric-asym", "curvature-limits", "model-convergence")


class ConfigError(ValueError):
    pass


_RANGE = re.compile(r"^\s*(\d+)\s*\^\s*(\d+)\s*\.\.\s*(\d+)\s*\^\s*(\d+)\s*$")


def parse_js(text: str) -> tuple:
    m = _RANGE.match(text)
    if m:
        b1, p1, b2, p2 = (int(g) for g in m.groups())
        if b1 != b2 or b1 < 2 or p2 < p1:
            raise ConfigError(f"bad index range {text!r}")
        return tuple(b1 ** p for p in range(p1, p2 + 1))
    try:
        js = tuple(int(t) for t in text.split(","))
    except ValueError:
        raise ConfigError(f"bad index list {text!r}") from None
    if any(j <= 0 for j in js) or list(js) != sorted(set(js)):
        raise ConfigError("indices must be positive and strictly increasing")
    return js


def format_js(js) -> str:
    js = tuple(js)
    if len(js) >= 2 and js[0] > 1:
        b = js[1] // js[0]
        if b >= 2 and js[0] * b == js[1]:
            p = round(math.log(js[0], b))
            if b ** p == js[0] and js == tuple(b ** k for k in range(p, p + len(js))):
                return f"{b}^{p}..{b}^{p + len(js) - 1}"
    return ", ".join(str(j) for j in js)


def _ints(text: str) -> tuple:
    text = text.strip()
    return tuple(int(t) for t in text.split(",")) if text else ()


def _get(sec, key, default, conv=str):
    if sec is None or key not in sec:
        return default
    try:
        return conv(sec[key])
    except ValueError as exc:
        raise ConfigError(f"[{sec.name}] {key}: {exc}") from None


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str  # claim keys are case sensitive
    return cp


def parse_config(text: str, source: str = "") -> ExperimentConfig:
    cp = _parser()
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    known = {"experiment", "domain", "sequence", "engine", "run", "claims", "thresholds"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")
    if "experiment" not in cp or "domain" not in cp:
        raise ConfigError("[experiment] and [domain] are required")
    ex = cp["experiment"]
    kind = ex.get("kind", "")
    if kind not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment kind {kind!r}; choose from {', '.join(EXPERIMENTS)}")
    pipeline = ex.get("pipeline", "multitype")
    if pipeline not in ("multitype", "finite-type"):
        raise ConfigError(f"pipeline must be multitype or finite-type, not {pipeline!r}")

    d = cp["domain"]
    dkind = d.get("kind", "model")
    if dkind == "ball":
        domain = DomainSpec("ball", N=_get(d, "N", 2, int))
    elif dkind == "model":
        if "polynomial" not in d or "weights" not in d:
            raise ConfigError("model domains need polynomial and weights")
        weights = _get(d, "weights", (), _ints)
        domain = DomainSpec("model", d["polynomial"].strip(), n=_get(d, "n", len(weights), int), weights=weights,
                            two_m=_get(d, "two_m", 2 * max(weights), int))
        try:
            domain.model_polynomial()
        except Exception as exc:
            raise ConfigError(f"[domain] polynomial: {exc}") from None
    else:
        raise ConfigError(f"unknown domain kind {dkind!r}")

    sequence = None
    if "sequence" in cp:
        s = cp["sequence"]
        alpha = tuple(t.strip() for t in s.get("alpha", "").split(";") if t.strip())
        if domain.kind == "model" and len(alpha) != domain.n:
            raise ConfigError(f"sequence has {len(alpha)} tangential components, domain has {domain.n}")
        sequence = SequenceSpec(alpha, s.get("beta", "").strip())

    e = cp["engine"] if "engine" in cp else None
    degree = _get(e, "degree", "auto")
    engine = EngineSpec(
        strategy=_get(e, "strategy", "auto"),
        degree=degree if degree in ("auto", "inf") else int(degree),
        samples=_get(e, "samples", 200_000, lambda t: int(float(t))),
        box=_get(e, "box", 1.25, float),
        radius=_get(e, "radius", 0.5, float),
        probe_jmin=_get(e, "probe_jmin", 1024, int),
    )
    r = cp["run"] if "run" in cp else None
    th = cp["thresholds"] if "thresholds" in cp else None
    thresholds = Thresholds(**{f.name: _get(th, f.name, f.default, float) for f in dataclasses.fields(Thresholds)})
    claims = {k: v.strip() for k, v in cp["claims"].items()} if "claims" in cp else {}
    covers = tuple(t.strip() for t in ex.get("covers", "").split(",") if t.strip())
    bad = [c for c in covers if c not in CLAIMS]
    if bad:
        raise ConfigError(f"unknown claim ids {bad}")
    return ExperimentConfig(
        name=ex.get("name", Path(source).stem if source else "run"),
        experiment=kind,
        domain=domain,
        sequence=sequence,
        engine=engine,
        pipeline=pipeline,
        js=_get(r, "js", tuple(2 ** k for k in range(4, 15)), parse_js),
        seed=_get(r, "seed", 0, int),
        slope_tol=_get(r, "slope_tol", 0.05, float),
        curvature_tol=_get(r, "curvature_tol", 0.02, float),
        thresholds=thresholds,
        claims=claims,
        output=_get(r, "output", ""),
        workers=_get(r, "workers", 1, int),
        covers=covers,
        source=source,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text, str(path))


def dump_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; ``parse_config(dump_config(c))`` reproduces ``c`` up to ``source``."""
    cp = _parser()
    cp["experiment"] = {"name": cfg.name, "kind": cfg.experiment, "pipeline": cfg.pipeline,
                        "covers": ", ".join(cfg.covers)}
    d = cfg.domain
    if d.kind == "ball":
        cp["domain"] = {"kind": "ball", "N": str(d.N)}
    else:
        cp["domain"] = {"kind": "model", "polynomial": d.polynomial, "n": str(d.n),
                        "weights": ", ".join(str(w) for w in d.weights), "two_m": str(d.two_m)}
    if cfg.sequence is not None:
        cp["sequence"] = {"alpha": "; ".join(cfg.sequence.alpha), "beta": cfg.sequence.beta}
    e = cfg.engine
    cp["engine"] = {"strategy": e.strategy, "degree": str(e.degree), "samples": str(e.samples),
                    "box": repr(e.box), "radius": repr(e.radius), "probe_jmin": str(e.probe_jmin)}
    cp["run"] = {"js": format_js(cfg.js), "seed": str(cfg.seed), "slope_tol": repr(cfg.slope_tol),
                 "curvature_tol": repr(cfg.curvature_tol), "workers": str(cfg.workers), "output": cfg.output}
    cp["thresholds"] = {k: repr(v) for k, v in dataclasses.asdict(cfg.thresholds).items()}
    cp["claims"] = dict(cfg.claims)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode("utf-8")).hexdigest()


def with_overrides(cfg: ExperimentConfig, seed: int | None = None, jmax: int | None = None) -> ExperimentConfig:
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if jmax is not None:
        js = tuple(j for j in cfg.js if j <= jmax)
        if len(js) < 5 and cfg.experiment in ("kernel-asym", "metric-asym", "model-convergence"):
            raise ExperimentError(f"--jmax {jmax} leaves {len(js)} indices; slope fits need 5")
        if not js:
            raise ExperimentError(f"--jmax {jmax} removes every index")
        changes["js"] = js
    return dataclasses.replace(cfg, **changes) if changes else cfg


def preset_dir() -> Path:
    return Path(__file__).with_name("presets")


def list_presets() -> list:
    return sorted(preset_dir().glob("*.cfg"))
