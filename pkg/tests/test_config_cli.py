import json
import subprocess
import sys

import pytest

from bergscale.cli import main
from bergscale.config import (ConfigError, config_hash, dump_config, format_js, list_presets, load_config,
                              parse_config, parse_js, with_overrides)
from bergscale.experiments import ExperimentError

MINIMAL = """
[experiment]
name = demo
kind = kernel-asym
[domain]
kind = ball
N = 2
[run]
js = 2^4..2^10   # inline comment
"""


def test_parse_js():
    assert parse_js("2^4..2^6") == (16, 32, 64)
    assert parse_js("1, 5, 9") == (1, 5, 9)
    for bad in ("2^4..3^6", "3, 2", "a, b", "0, 1", "2^6..2^4"):
        with pytest.raises(ConfigError):
            parse_js(bad)


@pytest.mark.parametrize("js", [(16, 32, 64, 128), (1, 5, 9), (3, 9, 27)])
def test_format_js_round_trip(js):
    assert parse_js(format_js(js)) == js


def test_minimal_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.name == "demo" and cfg.domain.N == 2
    assert cfg.js == tuple(2 ** k for k in range(4, 11))
    assert cfg.seed == 0 and cfg.slope_tol == 0.05
    assert cfg.engine.samples == 200_000


@pytest.mark.parametrize("path", list_presets(), ids=lambda p: p.stem)
def test_dump_round_trip(path):
    cfg = load_config(path)
    again = parse_config(dump_config(cfg), cfg.source)
    assert again == cfg
    assert config_hash(again) == config_hash(cfg)


@pytest.mark.parametrize("text,needle", [
    ("[experiment]\nkind = kernel-asym\n", "required"),
    (MINIMAL.replace("kernel-asym", "bogus"), "unknown experiment kind"),
    (MINIMAL + "[extra]\nx = 1\n", "unknown sections"),
    (MINIMAL.replace("kind = ball", "kind = cube"), "unknown domain kind"),
    (MINIMAL.replace("kind = ball\nN = 2", "kind = model\npolynomial = z1^2*zb1^2"), "polynomial and weights"),
    (MINIMAL.replace("kind = ball\nN = 2", "kind = model\npolynomial = z1^^2\nweights = 2"), "polynomial"),
    (MINIMAL.replace("2^4..2^10", "ten"), "index"),
    (MINIMAL + "[experiment]\n", "already exists"),
    (MINIMAL.replace("name = demo", "name = demo\ncovers = no-such-claim"), "unknown claim"),
    (MINIMAL.replace("name = demo", "name = demo\npipeline = bogus"), "pipeline"),
])
def test_config_errors(text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config(text)


def test_sequence_dimension_mismatch():
    text = """
[experiment]
kind = sequence-report
[domain]
polynomial = z1^2*zb1^2 + z2^3*zb2^3
weights = 2, 3
[sequence]
alpha = j^(-1/4)
beta = -1/j
"""
    with pytest.raises(ConfigError, match="tangential components"):
        parse_config(text)


def test_overrides():
    cfg = parse_config(MINIMAL)
    assert with_overrides(cfg, seed=7).seed == 7
    assert with_overrides(cfg, jmax=300).js == (16, 32, 64, 128, 256)
    with pytest.raises(ExperimentError):
        with_overrides(cfg, jmax=100)
    assert with_overrides(cfg) is cfg


def test_cli_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "res"
    assert main(["kernel-asym", "--config", "ball-kernel", "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "PASS ball-kernel:kernel_exponent" in printed
    assert {p.name for p in out.iterdir()} == {"ball-kernel.csv", "ball-kernel.claims.csv", "ball-kernel.cfg",
                                             "manifest.jsonl"}
    rec = json.loads((out / "manifest.jsonl").read_text().splitlines()[0])
    assert rec["passed"] and rec["seed"] == 0 and len(rec["config_sha256"]) == 64
    assert set(rec["versions"]) == {"bergscale", "backend", "python", "numpy", "scipy"}
    # the stored config reproduces the run hash
    assert config_hash(load_config(out / "ball-kernel.cfg")) == rec["config_sha256"]


def test_cli_appends_manifest_and_applies_overrides(tmp_path):
    out = tmp_path / "res"
    main(["kernel-asym", "--config", "ball-kernel", "--out", str(out), "--quiet"])
    main(["kernel-asym", "--config", "ball-kernel", "--out", str(out), "--quiet", "--seed", "5", "--jmax", "512"])
    recs = [json.loads(l) for l in (out / "manifest.jsonl").read_text().splitlines()]
    assert len(recs) == 2 and recs[1]["seed"] == 5
    assert recs[0]["config_sha256"] != recs[1]["config_sha256"]
    rows = (out / "ball-kernel.csv").read_text().splitlines()
    assert rows[-1].startswith("512,")


def test_cli_failing_claim_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(MINIMAL + "[claims]\nkernel_exponent = 5\n")
    assert main(["kernel-asym", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "FAIL demo:kernel_exponent" in capsys.readouterr().out


def test_cli_config_errors(tmp_path, capsys):
    assert main(["kernel-asym", "--config", "no-such-preset", "--out", str(tmp_path)]) == 2
    assert main(["metric-asym", "--config", "ball-kernel", "--out", str(tmp_path)]) == 2
    assert main(["kernel-asym", "--out", str(tmp_path)]) == 2
    assert main(["kernel-asym", "--config", "ellipsoid-kernel", "--jmax", "64", "--out", str(tmp_path)]) == 2
    assert "error:" in capsys.readouterr().err


def test_cli_all_with_configs(tmp_path):
    out = tmp_path / "o"
    assert main(["all", "--config", "ball-kernel", "--config", "ball-metric", "--out", str(out), "--quiet"]) == 0
    assert len((out / "manifest.jsonl").read_text().splitlines()) == 2


def test_cli_presets(capsys):
    assert main(["presets"]) == 0
    assert "kn-stability" in capsys.readouterr().out.split()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "bergscale", "check-domain", "--config", "kn-domain",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "PASS kn-domain:" in proc.stdout
