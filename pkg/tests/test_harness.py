import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from thetanls.cli import run_cli
from thetanls.config import (SCHEMA, ConfigError, ExperimentConfig, load_config, parse_config,
                             parse_number, parse_theta)
from thetanls.harness import estimate_order, invariant_experiment, strong_error_experiment
from thetanls.scheme import Fixed, HalfPlusCSqrtTau

# small problem so the coupled experiments stay quick
SMALL = """
grid.n_cells = 64
time.T = 2^-4
time.tau_list = 2^-6, 2^-7, 2^-8, 2^-9
time.tau_ref = 2^-9
noise.L = 4
scheme.theta = 1
mc.realizations = 3
"""


@pytest.mark.parametrize("text,value", [("2^-8", 2.0**-8), ("1/4", 0.25), ("sqrt(2)", math.sqrt(2)),
                                        ("-1", -1.0), ("2*pi", 2 * math.pi), ("1e-12", 1e-12)])
def test_parse_number(text, value):
    assert parse_number(text) == value


@pytest.mark.parametrize("text", ["__import__('os')", "x", "1/0", "2^", "open(1)"])
def test_parse_number_rejects(text):
    with pytest.raises(ValueError):
        parse_number(text)


@pytest.mark.parametrize("text,policy", [("0.5", Fixed(0.5)), ("1", Fixed(1.0)), ("fixed:0.75", Fixed(0.75)),
                                         ("sqrt", HalfPlusCSqrtTau(1.0)), ("sqrt:2", HalfPlusCSqrtTau(2.0))])
def test_parse_theta(text, policy):
    assert parse_theta(text) == policy


def test_defaults():
    cfg = parse_config("")
    assert cfg == ExperimentConfig()
    assert cfg.grid.n_cells == 512 and cfg.time.T == 0.25 and cfg.noise.nu == math.sqrt(2)
    assert cfg.time.tau_list == tuple(2.0**-k for k in range(7, 12))


def test_parse_full_config():
    cfg = parse_config(SMALL + "scheme.theta = 1/2, sqrt, 1  # three policies\n")
    assert cfg.grid.n_cells == 64
    assert cfg.scheme.thetas == (Fixed(0.5), HalfPlusCSqrtTau(1.0), Fixed(1.0))
    assert cfg.time.tau_ref == 2.0**-9


@pytest.mark.parametrize("text,line", [
    ("grid.n_cells = 64\nbogus.key = 1\n", 2),
    ("\n\ngrid.n_cells = 6.5\n", 3),
    ("time.T = 1\nno equals sign\n", 2),
    ("scheme.theta = 2\n", 1),
])
def test_errors_cite_line(text, line):
    with pytest.raises((ConfigError, ValueError)) as info:
        parse_config(text, "exp.cfg")
    assert f"exp.cfg:{line}:" in str(info.value)


@pytest.mark.parametrize("text", [
    "time.T = 0.25\ntime.tau = 0.3\n",
    "time.tau_list = 2^-7\ntime.tau_ref = 3e-3\n",
    "scheme.lambda = 0\n",
    "mc.realizations = 0\n",
    "initial.profile = gauss\n",
    "scheme.mass = weird\n",
])
def test_validation_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_overrides_win_over_file(tmp_path):
    p = tmp_path / "a.cfg"
    p.write_text(SMALL)
    cfg = load_config(p, ["noise.L=8", "mc.realizations = 7"])
    assert (cfg.noise.L, cfg.mc.realizations, cfg.grid.n_cells) == (8, 7, 64)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.cfg")


def test_estimate_order_exact_power_laws():
    taus = [2.0**-k for k in range(7, 12)]
    for p in (0.5, 1.0, 2.0):
        slope, res = estimate_order(taus, [3 * t**p for t in taus])
        assert slope == pytest.approx(p, abs=1e-12) and res <= 1e-12
    slope, res = estimate_order([1, 2, 4], [1, 1, 1])
    assert slope == 0 and res == 0


@given(p=st.floats(0.1, 3), c=st.floats(1e-3, 1e3))
def test_estimate_order_property(p, c):
    taus = np.array([0.1, 0.05, 0.025, 0.0125])
    slope, _ = estimate_order(taus, c * taus**p)
    assert slope == pytest.approx(p, abs=1e-9)


@pytest.mark.parametrize("taus,errs", [([1.0], [1.0]), ([1, 2], [1, 0]), ([1, 1], [1, 2]), ([1, 2], [1, np.nan])])
def test_estimate_order_rejects(taus, errs):
    with pytest.raises(ValueError):
        estimate_order(taus, errs)


def test_coupled_error_table():
    cfg = parse_config(SMALL)
    table = strong_error_experiment(cfg, workers=1)
    assert [r.tau for r in table.rows] == [2.0**-6, 2.0**-7, 2.0**-8, 2.0**-9]
    # the reference step itself reproduces the reference exactly
    assert table.rows[-1].rms_error == 0.0
    errs = [r.rms_error for r in table.rows[:-1]]
    assert errs[0] > errs[1] > errs[2] > 0
    assert all(r.realizations == 3 and r.failures == 0 for r in table.rows)
    assert 0.3 < table.fitted_order < 1.5
    csv = table.to_csv().splitlines()
    assert csv[0] == "tau,rms_error,realizations,failures"
    assert csv[-1].startswith("# fitted_order=")


def test_reproducible_across_worker_counts():
    cfg = parse_config(SMALL)
    a = strong_error_experiment(cfg, workers=1).to_csv()
    b = strong_error_experiment(cfg, workers=2).to_csv()
    assert a == b
    inv = parse_config(SMALL + "scheme.theta = 1/2, sqrt\ntime.tau = 2^-7\n")
    assert invariant_experiment(inv, workers=1).csv == invariant_experiment(inv, workers=2).csv


def test_invariants_share_noise_across_policies():
    cfg = parse_config(SMALL + "scheme.theta = 1/2, 1\ntime.tau = 2^-7\n")
    rep = invariant_experiment(cfg, workers=1)
    half, one = rep.stats["0.5"], rep.stats["1"]
    assert abs(half.max_abs_drift) < 1e-10
    assert one.mass_drift[-1] < 0 and half.realizations == one.realizations == 3


def _write(tmp_path, text):
    p = tmp_path / "c.cfg"
    p.write_text(text)
    return str(p)


def test_cli_converge(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL)
    assert run_cli(["converge", "--config", cfg]) == 0
    out = capsys.readouterr().out
    assert out.startswith("tau,rms_error,realizations,failures")
    last = out.strip().splitlines()[-1]
    assert last.startswith("# theta=1 order=")


def test_cli_simulate_zero_initial_state(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL + "initial.profile = zero\nmc.realizations = 1\ntime.tau = 2^-6\n")
    assert run_cli(["simulate", "--config", cfg]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("step,time,mass")
    assert len(lines) == 6
    for line in lines[1:]:
        vals = [float(v) for v in line.split(",")]
        assert vals[2:] == [0.0] * 5


def test_cli_simulate_to_file(tmp_path):
    out = tmp_path / "o.csv"
    cfg = _write(tmp_path, SMALL + f"mc.realizations = 1\ntime.tau = 2^-6\noutput.csv = {out}\n")
    assert run_cli(["simulate", "--config", cfg, "--set", "noise.L=0"]) == 0
    mass = [float(r.split(",")[2]) for r in out.read_text().splitlines()[1:]]
    assert len(mass) == 5 and mass[-1] < mass[0]


def test_cli_missing_config_prints_schema(tmp_path, capsys):
    assert run_cli(["simulate", "--config", str(tmp_path / "nope.cfg")]) == 1
    err = capsys.readouterr().err
    assert "cannot read config" in err and SCHEMA in err


def test_cli_bad_key_and_usage(capsys):
    assert run_cli(["converge", "--set", "grid.cells=3"]) == 1
    assert "unknown key" in capsys.readouterr().err
    assert run_cli(["frobnicate"]) == 1
    assert run_cli([]) == 1


def test_cli_help_config(capsys):
    assert run_cli(["invariants", "--help-config"]) == 0
    assert capsys.readouterr().out == SCHEMA


def test_cli_numerical_failure_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL + "scheme.newton_max_iter = 1\nscheme.newton_tol = 1e-15\n"
                 "mc.realizations = 1\ntime.tau = 2^-6\n")
    assert run_cli(["simulate", "--config", cfg]) == 2
    assert "numerical failure" in capsys.readouterr().err


def test_cli_invariants(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL + "noise.L = 0\nmc.realizations = 1\ntime.tau = 2^-6\nscheme.theta = 1/2\n")
    assert run_cli(["invariants", "--config", cfg]) == 0
    out = capsys.readouterr().out
    assert "# [theta=0.5] realizations=1 failures=0" in out


def test_cli_selftest(capsys):
    assert run_cli(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") >= 5


def test_shipped_zero_config_gives_all_zero_csv(capsys):
    from pathlib import Path

    cfg = Path(__file__).resolve().parents[1] / "configs" / "zero.cfg"
    assert run_cli(["simulate", "--config", str(cfg), "--set", "grid.n_cells=64"]) == 0
    rows = capsys.readouterr().out.strip().splitlines()[1:]
    assert len(rows) == 17
    assert all(float(v) == 0 for r in rows for v in r.split(",")[2:])
