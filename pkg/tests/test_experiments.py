import dataclasses
import json
from fractions import Fraction

import numpy as np
import pytest

from bergscale.config import load_config, preset_dir
from bergscale.experiments import (AsymptoticsReport, ExperimentError, SequenceExponents, fit_corrected_slope,
                                   fit_log_slope, make_claim, predicted_ell_rates, predicted_gap_exponent,
                                   predicted_kernel_exponent, predicted_metric_exponents, predicted_tau_rates, run,
                                   sequence_exponents)
from bergscale.sequences import ApproachSequence
from bergscale.wpoly import Multiweight

XS = np.array([2.0 ** k for k in range(4, 15)])


def test_fit_exact_power():
    fit = fit_log_slope(XS, XS ** 2)
    assert fit.slope == pytest.approx(2, abs=1e-12)
    assert fit.status == "ok" and fit.r2 == pytest.approx(1)


def test_fit_perturbed_power():
    fit = fit_log_slope(XS, 3 * XS ** 1.25 * (1 + 0.01 * np.sin(XS)))
    assert fit.within(1.25, 0.01)
    assert fit.ci < 0.01


def test_fit_constant():
    fit = fit_log_slope(XS, np.full(XS.shape, 7.0))
    assert fit.slope == 0 and fit.status == "ok"


@pytest.mark.parametrize("xs,ys", [
    (XS[:4], XS[:4]),
    (XS, -XS),
    (XS, np.where(XS > 100, 0.0, 1.0)),
    (XS[::-1], XS),
])
def test_fit_rejects_bad_input(xs, ys):
    with pytest.raises(ExperimentError):
        fit_log_slope(xs, ys)


def test_fit_inconclusive_on_noise(rng):
    fit = fit_log_slope(XS, np.exp(rng.normal(size=XS.size)))
    assert fit.status == "inconclusive"
    assert not fit.within(fit.slope, 1.0)


def test_corrected_fit_removes_subleading_bias():
    small = XS ** -0.25
    ys = XS ** -0.5 * (1 + 2 * small + 3 * small ** 2)
    raw = fit_log_slope(XS, ys)
    corr = fit_corrected_slope(XS, ys, small)
    assert abs(raw.slope + 0.5) > 0.05
    assert corr.slope == pytest.approx(-0.5, abs=1e-6)


ELLIPSOID_EX = SequenceExponents((Fraction(1, 4), Fraction(1, 6)), Fraction(2), (Fraction(3, 4), Fraction(5, 6)))
KN_EX = SequenceExponents((Fraction(1, 8),), Fraction(2), (Fraction(7, 8),))
UNBALANCED_EX = SequenceExponents((Fraction(1, 8),), Fraction(2), (None,))


def test_golden_predictions():
    m = Multiweight([2, 3])
    assert predicted_tau_rates(m, ELLIPSOID_EX) == [Fraction(3, 8), Fraction(1, 3)]
    assert predicted_kernel_exponent(m, ELLIPSOID_EX) == Fraction(41, 12)
    assert predicted_ell_rates(m, ELLIPSOID_EX) == [Fraction(1, 2), Fraction(1, 2)]
    assert predicted_metric_exponents(m, ELLIPSOID_EX) == {"e_w": 2, "e_1": Fraction(5, 4), "e_2": Fraction(7, 6)}
    assert predicted_gap_exponent(m, ELLIPSOID_EX) == Fraction(-1, 2)
    m4 = Multiweight([4])
    assert predicted_kernel_exponent(m4, KN_EX) == Fraction(21, 8)
    assert predicted_metric_exponents(m4, KN_EX)["e_1"] == Fraction(9, 8)
    assert predicted_ell_rates(m4, UNBALANCED_EX) == [None]
    assert predicted_metric_exponents(m4, UNBALANCED_EX)["e_1"] == Fraction(5, 8)
    assert predicted_gap_exponent(m4, UNBALANCED_EX) == Fraction(-1, 2)


def test_predictions_are_pure():
    m = Multiweight([2, 3])
    a = predicted_metric_exponents(m, ELLIPSOID_EX)
    b = predicted_metric_exponents(m, dataclasses.replace(ELLIPSOID_EX))
    assert a == b
    assert ELLIPSOID_EX.alpha == (Fraction(1, 4), Fraction(1, 6))


def test_measured_sequence_exponents(ellipsoid_rho, kn_rho, unbalanced_rho):
    seq = ApproachSequence.from_strings(["j^(-1/4)", "j^(-1/6)"], "-2/j - 1/j^2", ellipsoid_rho)
    assert sequence_exponents(seq) == ELLIPSOID_EX
    seq = ApproachSequence.from_strings(["j^(-1/8)"], "-22/(7*j) - 1/j^2", kn_rho)
    assert sequence_exponents(seq) == KN_EX
    seq = ApproachSequence.from_strings(["j^(-1/8)"], "-1/j^2", unbalanced_rho)
    assert sequence_exponents(seq) == UNBALANCED_EX


def test_gap_needs_tangential_sequence():
    with pytest.raises(ExperimentError):
        predicted_gap_exponent(Multiweight([4]), SequenceExponents((None,), Fraction(1), (None,)))


def test_claim_and_report_outputs(tmp_path):
    rep = AsymptoticsReport("kernel-asym", "demo", rows=[{"j": 16, "K": 1.5}, {"j": 32, "K": 2.5, "extra": 1j}])
    rep.claims = [make_claim("a", 1.0, 1.0, 0.1), make_claim("b", float("nan"), 1.0, 0.1)]
    assert not rep.passed and rep.claim("a").passed
    rep.write_csv(tmp_path / "t.csv")
    rep.write_claims_csv(tmp_path / "c.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "j,K,extra" and lines[1] == "16,1.5,"
    assert json.loads(rep.to_json())["passed"] is False
    with pytest.raises(KeyError):
        rep.claim("missing")


def test_same_seed_same_output(tmp_path):
    cfg = load_config(preset_dir() / "kn-stability.cfg")
    cfg = dataclasses.replace(cfg, js=(1024, 2048, 4096, 8192, 16384),
                              engine=dataclasses.replace(cfg.engine, samples=20000))
    a, b = run(cfg), run(cfg)
    a.write_csv(tmp_path / "a.csv")
    b.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()
    c = run(dataclasses.replace(cfg, seed=1))
    assert [r.get("K0_sampled") for r in c.rows] != [r.get("K0_sampled") for r in a.rows]
    assert a.rows[-1]["K0_sampled"] > 0


def test_unknown_experiment():
    cfg = load_config(preset_dir() / "ball-kernel.cfg")
    with pytest.raises(ExperimentError):
        run(dataclasses.replace(cfg, experiment="nope"))
