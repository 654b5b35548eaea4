import json
import math

import numpy as np
import pytest

from hardwall.errors import BudgetError, ConfigurationError, ParameterError
from hardwall.harness.cli import main, write_outputs
from hardwall.harness.config import dump_config, parse_config
from hardwall.harness.stats import (TOLERANCES, Tolerance, cross_cov_asymmetry, ks_two_sample,
                                    pooled_variance_se, recheck, record, variance_se)
from hardwall.harness.suites import (run_convergence_sweep, run_dynamics_suite,
                                     run_geometry_audit, run_invariant_measures)


def test_parse_config_literals_comments_and_bare_strings():
    cfg = parse_config("""
        # comment
        suite = dynamics
        N_list = [4, 8]   # trailing comment
        c = 0.5
        potential = quartic
        observers = [1, 2]
        master_seed = 123456789012
    """)
    assert cfg.suite == "dynamics" and cfg.N_list == [4, 8] and cfg.c == 0.5
    assert cfg.potential == "quartic" and cfg.master_seed == 123456789012
    again = parse_config(dump_config(cfg))
    assert again == cfg


@pytest.mark.parametrize("text", [
    "colour = red",
    "c = 0",
    "suite = plotting",
    "suite = dynamics\nN_list = [1, 4]",
    "suite = convergence\nN_list = [8, 4]\nM = 16",
    "suite = convergence\nN_list = [4, 8]\nM = 8",
    "observers = []",
    "ensemble = 0",
    "just some words",
])
def test_parse_config_rejects(text):
    with pytest.raises(ConfigurationError):
        parse_config(text)


def test_ks_examples():
    a = np.array([0.3, 1.2, 2.2, 5.0])
    assert ks_two_sample(a, a).statistic == 0
    assert ks_two_sample([0.0], [1.0]).statistic == 1
    with pytest.raises(ParameterError):
        ks_two_sample([], [1.0])


def test_ks_calibration():
    rng = np.random.default_rng(0)
    below = 0
    for _ in range(100):
        r = ks_two_sample(rng.standard_normal(10_000), rng.standard_normal(10_000))
        below += r.statistic < r.critical_1pct
    assert below >= 98


def test_ks_matches_scipy():
    from scipy import stats
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=300), rng.normal(0.2, 1.1, size=500)
    assert ks_two_sample(a, b).statistic == pytest.approx(stats.ks_2samp(a, b).statistic)


def test_tolerances_and_recheck():
    assert Tolerance("le", 1.0).check(1.0)
    assert not Tolerance("le", 1.0).check(1.5, 0.1)
    assert Tolerance("le", 1.0, 3).check(1.2, 0.1)
    assert Tolerance("abs_le", 0.1, 3).check(-0.3, 0.07)
    assert not Tolerance("ge", 0.0, -2).check(0.1, 0.06)
    assert Tolerance("ge", 0.0, -2).check(0.13, 0.06)
    assert not Tolerance("le", 1.0).check(float("nan"))
    r = record("s", {"N": 2}, "x", 0.09, 0.01, TOLERANCES["variance_rel_dev"])
    assert r.passed and recheck(r) == r.passed
    with pytest.raises(ParameterError):
        record("s", {}, "x", 0.0, -1.0, TOLERANCES["variance_rel_dev"])


def test_variance_helpers():
    rng = np.random.default_rng(2)
    x = rng.normal(size=200_000) * 2
    v, se = variance_se(x)
    assert abs(v - 4) < 4 * se
    assert se == pytest.approx(4 * math.sqrt(2 / x.size), rel=0.05)
    pv, pse = pooled_variance_se(x.reshape(20_000, 10))
    assert abs(pv - 4) < 4 * pse
    a0, b0 = rng.normal(size=(2, 5000))
    d, dse = cross_cov_asymmetry(a0, a0, b0, b0)
    assert d == pytest.approx(0, abs=1e-12)


def test_geometry_audit_examples():
    res = run_geometry_audit(parse_config("N_list = [1, 2, 16, 64]\nsamples = 500"))
    assert res.passed
    row = {r[0]: r for r in res.rows}
    assert row[1][1] == 0.0
    assert row[2][2] == pytest.approx(2 / 3) and row[2][3] == pytest.approx(2 / 3)
    assert all(recheck(r) == r.passed for r in res.records)


def test_invariant_measures_zero_mode_and_shapes():
    cfg = parse_config("suite = invariant-measures\nN_list = [8, 32]\nM = 64\n"
                       "observers = [0, 1]\nsamples = 3000")
    res = run_invariant_measures(cfg)
    ks0 = [r for r in res.rows if r[1] == 0]
    assert all(r[2] == 0 for r in ks0)
    assert len(res.rows) == 4


def test_dynamics_suite_is_deterministic():
    cfg = parse_config("suite = dynamics\nN_list = [6]\nmacro_T = 0.02\nensemble = 60\n"
                       "observers = [1, 2]\nmaster_seed = 99")
    a = run_dynamics_suite(cfg, threads=1)
    b = run_dynamics_suite(cfg, threads=2)
    assert [r.to_json() for r in a.records] == [r.to_json() for r in b.records]
    assert a.rows == b.rows


def test_convergence_zero_mode_and_budget_guard():
    cfg = parse_config("suite = convergence\nN_list = [4, 8]\nM = 16\nmacro_T = 0.001\n"
                       "ensemble = 200\nobservers = [0, 1]")
    res = run_convergence_sweep(cfg)
    zero = [r for r in res.records if r.statistic == "zero_mode_covariance"]
    assert len(zero) == 2 and all(r.passed for r in zero)
    cfg.step_budget = 1e3
    with pytest.raises(BudgetError):
        run_convergence_sweep(cfg)


def test_cli_writes_outputs_and_exit_code(tmp_path, capsys):
    conf = tmp_path / "geo.cfg"
    conf.write_text("N_list = [2, 4, 16, 32]\nsamples = 200\n")
    out = tmp_path / "out"
    code = main(["geometry", "--config", str(conf), "--out", str(out), "--seed", "5"])
    assert code == 0
    header = (out / "geometry_audit.csv").read_text().splitlines()[0]
    assert header == "N,max_est0_gap,min_ratio,max_ratio,pin_norm_error"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] is True
    assert "PASS" in capsys.readouterr().out
    bad = tmp_path / "bad.cfg"
    bad.write_text("suite = convergence\nN_list = [4]\nM = 8\nstep_budget = 1\n")
    assert main(["converge", "--config", str(bad), "--out", str(out)]) == 2


def test_failed_record_gives_nonzero_exit(tmp_path):
    from hardwall.harness.suites import SuiteResult
    res = SuiteResult("geometry", ["a"], [[1.0]],
                      [record("geometry", {}, "est0_rel_gap", 1.0, 0.0,
                              TOLERANCES["est0_rel_gap"])])
    write_outputs(res, tmp_path)
    assert json.loads((tmp_path / "summary.json").read_text())["passed"] is False
