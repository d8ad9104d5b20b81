import math
import types

import numpy as np
import pytest

from hololearn import cli
from hololearn.harness import (ConvergenceTable, ExperimentSpec, fit_slope, geometric_stats, manifest_hash,
                               relative_test_error, run_convergence, run_trial, theory_overlay, trial_seed)
from hololearn.legendre import DiscreteNorm
from hololearn.multiindex import hyperbolic_cross
from hololearn.operators import ConfigError, format_config_text, synthetic_affine_family
from hololearn.polyfit import predicted_rates
from hololearn.quadrature import smolyak

ORACLE = {"family": "affine-a1", "d": 4, "K": 33, "noise": 0.0, "norm": "weighted-euclidean", "source": 10.0}


def small_spec(**kw):
    base = dict(oracle=ORACLE, m_values=(10, 20, 40), trials=2, test_level=3, index_n=4, slope_window=(10, 40))
    base.update(kw)
    return ExperimentSpec(**base)


def test_relative_error_examples():
    rule = smolyak(2, 2)
    orc = synthetic_affine_family([1.0, 0.5], [1.0, 0.3], np.array([1.0, 0.0]))
    assert relative_test_error(orc, orc, rule) == 0.0
    zero = lambda X: np.zeros((len(X), 2))
    assert relative_test_error(zero, orc, rule) == pytest.approx(1.0, rel=1e-15)
    half = lambda X: 0.5 * orc(X)
    assert relative_test_error(half, orc, rule) == pytest.approx(0.5, rel=1e-14)
    null = synthetic_affine_family([1.0], [0.0], np.array([1.0, 0.0]))
    with pytest.raises(ZeroDivisionError):
        relative_test_error(zero, null, smolyak(1, 2))


def test_relative_error_rotation_invariant():
    rule = smolyak(2, 3)
    rng = np.random.default_rng(0)
    K = 5
    A = rng.standard_normal((2, K))
    F = lambda X: np.column_stack([np.sin(X[:, 0]), X[:, 1] ** 2, X[:, 0] * X[:, 1], np.ones(len(X)), X[:, 0]])
    G = lambda X: F(X) + 0.01 * (X @ A)
    Q, _ = np.linalg.qr(rng.standard_normal((K, K)))
    orc = types.SimpleNamespace(output_norm=DiscreteNorm.unit(K))
    Fv, Gv = F(rule.nodes), G(rule.nodes)
    e1 = relative_test_error(Gv, orc, rule, F_values=Fv)
    e2 = relative_test_error(Gv @ Q, orc, rule, F_values=Fv @ Q)
    assert e1 == pytest.approx(e2, rel=1e-12)


def test_geometric_stats_and_slope():
    g, lo, hi = geometric_stats([1e-2, 1e-4])
    assert g == pytest.approx(1e-3, rel=1e-14) and lo < g < hi
    assert geometric_stats([0.3]) == (pytest.approx(0.3), pytest.approx(0.3), pytest.approx(0.3))
    m = np.array([10, 20, 50, 100, 200, 500])
    for s in (-1.0, -1.5, -0.37):
        assert fit_slope(m, 3.0 * m**s) == pytest.approx(s, abs=1e-10)
    with pytest.raises(ValueError):
        fit_slope([10, 20], [1.0, 0.5])


def test_predicted_rates_self_check():
    m = np.array([10, 20, 50, 100, 200, 500], dtype=float)
    for p in (0.5, 2 / 3):
        for hilbert in (True, False):
            c = predicted_rates(None, p, m, hilbert=hilbert, include_log=False)
            assert fit_slope(m, c.values, (10, 500)) == pytest.approx(c.exponent, abs=1e-10)


def test_trial_seed_distinct():
    seeds = {trial_seed(0, m, t) for m in (10, 20, 30) for t in range(12)}
    assert len(seeds) == 36
    assert trial_seed(5, 10, 0) == trial_seed(5, 10, 0)


def test_synthetic_target_fit_exact():
    rule = smolyak(3, 3)
    b = np.array([1.0, 0.5, 0.25])
    c = np.array([0.4, -0.3, 0.2])
    orc = synthetic_affine_family(b, c, np.array([1.0, 2.0, 0.0]))
    spec = small_spec(m_values=(10, 20), trials=3)
    ctx = types.SimpleNamespace(spec=spec, oracle=orc, rule=rule, F=orc(rule.nodes), norm=orc.output_norm,
                                Lambda=hyperbolic_cross(3, 3))
    for m in (10, 20):
        for t in range(3):
            assert run_trial(ctx, m, t) <= 1e-8


def test_convergence_deterministic_and_jobs_independent():
    spec = small_spec()
    a = run_convergence(spec)
    b = run_convergence(spec)
    assert a.to_csv() == b.to_csv() and a.trials_csv() == b.trials_csv()
    c = run_convergence(spec, jobs=2)
    assert c.to_csv() == a.to_csv()
    assert a.to_csv().startswith("# manifest " + manifest_hash(spec))
    assert not a.flagged
    assert all(e > 0 for v in a.errors.values() for e in v)


def test_manifest_changes_with_config():
    assert manifest_hash(small_spec()) == manifest_hash(small_spec())
    assert manifest_hash(small_spec()) != manifest_hash(small_spec(trials=3))
    assert len(manifest_hash(small_spec())) == 40


def test_overlay_anchoring():
    table = ConvergenceTable([10, 100, 1000], {10: [0.5], 100: [0.05], 1000: [0.005]}, {10: 0, 100: 0, 1000: 0},
                             {10: 0, 100: 0, 1000: 0}, (10, 1000))
    ov = theory_overlay(table, p=2 / 3)
    assert ov.predicted[0] == ov.empirical[0] == 0.5
    np.testing.assert_allclose(ov.predicted, [0.5, 0.05, 0.005], rtol=1e-12)
    ban = theory_overlay(table, p=2 / 3, hilbert=False)
    assert ban.exponent - ov.exponent == pytest.approx(0.5)
    assert "# overlay exponent" in ov.to_csv("abc")


def test_exclusion_flag():
    table = ConvergenceTable([10], {10: [0.1, 0.2, 0.3, 0.4, 0.5]}, {10: 1}, {10: 0})
    assert not table.flagged
    table = ConvergenceTable([10], {10: [0.1, 0.2]}, {10: 2}, {10: 0})
    assert table.flagged
    assert "# flagged" in table.to_csv()


def test_spec_validation_and_fast():
    with pytest.raises(ConfigError):
        small_spec(m_values=(20, 10))
    with pytest.raises(ConfigError):
        small_spec(method="svm")
    cfg = dict(ORACLE, method="mlp", arch="4x40", trials="12", epochs="60000")
    spec = ExperimentSpec.from_config(cfg, fast=True)
    assert spec.trials == 3 and spec.epochs == 10000 and (spec.depth, spec.width) == (4, 40)
    with pytest.raises(ConfigError):
        ExperimentSpec.from_config(dict(cfg, trials="many"))
    assert ExperimentSpec.default_architecture(40) == (20, 40)


# ---------------------------------------------------------------------------
# command line


def write_config(tmp_path, **extra):
    cfg = dict(ORACLE, method="polyfit-ls", m_values="10,20", trials=2, test_level=2, index_n=3,
               slope_window="10,20")
    cfg.update(extra)
    path = tmp_path / "exp.cfg"
    path.write_text(format_config_text(cfg))
    return str(path)


def test_cli_run(tmp_path):
    cfg = write_config(tmp_path)
    out, trials, ov = tmp_path / "t.csv", tmp_path / "tr.csv", tmp_path / "ov.csv"
    argv = ["run", cfg, "--out", str(out), "--trials-out", str(trials), "--overlay-p", "0.6667",
            "--overlay-out", str(ov)]
    assert cli.main(argv) == 0
    first = out.read_bytes()
    assert cli.main(argv) == 0
    assert out.read_bytes() == first
    lines = first.decode().splitlines()
    assert lines[0].startswith("# manifest ") and lines[1].startswith("# slope ")
    assert trials.read_text().splitlines()[1] == "m,trial,error"
    assert ov.read_text().splitlines()[2] == "m,geomean,predicted"


def test_cli_config_errors(tmp_path, capsys):
    assert cli.main(["run", str(tmp_path / "missing.cfg")]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("family = poisson-2d\nd = 4\n")
    assert cli.main(["run", str(bad)]) == 2
    assert "invalid config" in capsys.readouterr().err


def test_cli_emulate(tmp_path, capsys):
    out = tmp_path / "net.txt"
    assert cli.main(["emulate", "--nu", "1:2", "--delta", "1e-3", "--n-cert", "2048", "--out", str(out)]) == 0
    assert "error=" in capsys.readouterr().out
    assert out.read_text().startswith("mlp tanh 1 ")
    assert cli.main(["emulate", "--nu", "1:3 2:2", "--delta", "1e-12", "--n-cert", "256"]) == 3


def test_cli_minimizer(tmp_path):
    out = tmp_path / "min.csv"
    assert cli.main(["minimizer", "--m", "4", "--index-n", "3", "--z-scale", "0,1e-6", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# manifest") and lines[1] == "z_scale,residual,sigma_min,param_norm"
    residuals = [float(l.split(",")[1]) for l in lines[2:]]
    assert len(residuals) == 2 and max(residuals) <= 1e-6


def test_cli_probes_and_rates(tmp_path):
    out, summ = tmp_path / "s.csv", tmp_path / "sum.csv"
    assert cli.main(["probe", "spikiness", "--m-values", "5,10", "--trials", "5", "--out", str(out),
                     "--summary-out", str(summ)]) == 0
    assert summ.read_text().splitlines()[1] == "m,median,q10,q90"
    assert cli.main(["probe", "sigma-min", "--m-values", "4", "--trials", "20", "--out", str(out)]) == 0
    assert out.read_text().splitlines()[1] == "m,r,fraction,q10,q50,q90"
    assert cli.main(["probe", "sigma-s", "--m-values", "3", "--out", str(out)]) == 0
    rows = out.read_text().splitlines()[2:]
    num, closed = map(float, rows[0].split(",")[3:5])
    assert num == pytest.approx(closed, rel=1e-13)
    assert cli.main(["rates", "--m-values", "10,100", "--no-log", "--out", str(out)]) == 0
    text = out.read_text().splitlines()
    assert text[1].startswith("# upper exponent -1") and text[2] == "m,upper,lower_floor,sigma_based"
    up = [float(r.split(",")[1]) for r in text[3:]]
    assert math.log(up[1] / up[0]) / math.log(10) == pytest.approx(-1.0, abs=1e-12)
