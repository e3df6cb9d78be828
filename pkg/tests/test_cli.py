"""Command-line front end: strict config parsing, artifact formats,
byte-stable outputs and the exit-code contract."""

import csv
import json
import math

import numpy as np
import pytest

from divband.cli import main

from conftest import degenerate_value_exact


def _write_config(tmp_path, cfg, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return str(path)


def _degenerate_cfg(dx=1e-3, x_hi=2.0, **extra):
    cfg = {
        "model": {
            "p": 1.0, "lam": 0.5, "r": 0.05, "alpha": 1.0, "delta": 0.1,
            "claims": {"type": "point_mass_zero"},
        },
        "grid": {"dx": dx, "x_hi": x_hi},
    }
    cfg.update(extra)
    return cfg


def _cfg1_cfg(dx=2e-3, x_hi=20.0, **extra):
    cfg = {
        "model": {
            "p": 1.0, "lam": 0.5, "r": 0.05, "alpha": 1.0, "delta": 0.1,
            "claims": {"type": "exponential", "rate": 1.0},
        },
        "grid": {"dx": dx, "x_hi": x_hi},
    }
    cfg.update(extra)
    return cfg


def _run(args):
    return main([str(a) for a in args])


# ----------------------------------------------------------------------
# solve
# ----------------------------------------------------------------------


def test_solve_degenerate_artifacts(tmp_path):
    cfg = _write_config(tmp_path, _degenerate_cfg())
    out = tmp_path / "out"
    assert _run(["solve", "--config", cfg, "--out", out]) == 0

    bands = json.loads((out / "bands.json").read_text())
    assert len(bands["anchors"]) == 1
    assert abs(bands["anchors"][0]) <= 1e-3
    assert bands["super_solution_ok"]

    with open(out / "grid.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    assert list(rows[0].keys()) == ["x", "V", "dV", "L_V", "G_V", "region"]
    xs = np.array([float(r["x"]) for r in rows])
    vals = np.array([float(r["V"]) for r in rows])
    assert np.max(np.abs(vals - degenerate_value_exact(xs))) <= 1e-4


def test_solve_cfg1_no_dividends_below_zero(tmp_path):
    cfg = _write_config(tmp_path, _cfg1_cfg())
    out = tmp_path / "out"
    assert _run(["solve", "--config", cfg, "--out", out]) == 0
    with open(out / "grid.csv", newline="") as f:
        for row in csv.DictReader(f):
            if float(row["x"]) < 0.0:
                assert row["region"] == "C"


def test_solve_rejects_delta_below_r(tmp_path, capsys):
    bad = _degenerate_cfg()
    bad["model"]["delta"] = 0.04
    cfg = _write_config(tmp_path, bad)
    assert _run(["solve", "--config", cfg, "--out", tmp_path / "out"]) == 2
    assert "delta must exceed r" in capsys.readouterr().err


def test_unknown_config_key_rejected(tmp_path):
    bad = _degenerate_cfg()
    bad["grid"]["step_size"] = 0.1
    cfg = _write_config(tmp_path, bad)
    assert _run(["solve", "--config", cfg, "--out", tmp_path / "out"]) == 2


def test_unknown_section_rejected(tmp_path):
    bad = _degenerate_cfg(plotting={"dpi": 300})
    cfg = _write_config(tmp_path, bad)
    assert _run(["solve", "--config", cfg, "--out", tmp_path / "out"]) == 2


def test_missing_config_file(tmp_path):
    assert _run(["solve", "--config", tmp_path / "nope.json", "--out", tmp_path]) == 2


def test_solver_failure_exit_code(tmp_path):
    cfg = _write_config(tmp_path, _cfg1_cfg(solver={"max_bands": 0}))
    out = tmp_path / "out"
    assert _run(["solve", "--config", cfg, "--out", out]) == 3
    assert "error" in json.loads((out / "bands.json").read_text())


# ----------------------------------------------------------------------
# simulate
# ----------------------------------------------------------------------


def test_simulate_take_all_exact_means(tmp_path):
    cfg = _write_config(
        tmp_path,
        _cfg1_cfg(sim={"n_paths": 100, "seed": 1, "x0_list": [-0.5, 0.0, 1.0],
                       "strategies": ["take_all"]}),
    )
    out = tmp_path / "out"
    assert _run(["simulate", "--config", cfg, "--out", out]) == 0
    with open(out / "sim.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    means = [float(r["mean"]) for r in rows]
    assert means == [0.5, 1.0, 2.0]
    assert all(float(r["std_err"]) == 0.0 for r in rows)


def test_simulate_byte_identical_reruns(tmp_path):
    cfg = _write_config(
        tmp_path,
        _degenerate_cfg(sim={"n_paths": 500, "seed": 7, "x0_list": [0.0],
                             "strategies": ["optimal", "none"]}),
    )
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert _run(["simulate", "--config", cfg, "--out", out1]) == 0
    assert _run(["simulate", "--config", cfg, "--out", out2]) == 0
    assert (out1 / "sim.csv").read_bytes() == (out2 / "sim.csv").read_bytes()


def test_simulate_cli_overrides(tmp_path):
    cfg = _write_config(
        tmp_path,
        _cfg1_cfg(sim={"n_paths": 50, "seed": 1, "x0_list": [0.0],
                       "strategies": ["take_all"]}),
    )
    out = tmp_path / "out"
    assert _run(["simulate", "--config", cfg, "--out", out,
                 "--paths", 10, "--x0", "2.5"]) == 0
    with open(out / "sim.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 1
    assert float(rows[0]["x0"]) == 2.5
    assert int(rows[0]["n"]) == 10
    assert float(rows[0]["mean"]) == 3.5


# ----------------------------------------------------------------------
# oracle
# ----------------------------------------------------------------------


def test_oracle_degenerate_gap(tmp_path):
    cfg = _write_config(
        tmp_path,
        _degenerate_cfg(oracle={"n": 500, "dt": 1e-3, "x_hi": 2.0}),
    )
    out = tmp_path / "out"
    assert _run(["oracle", "--config", cfg, "--out", out]) == 0
    with open(out / "oracle.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) >= 500
    xs = np.array([float(r["x"]) for r in rows])
    vals = np.array([float(r["V"]) for r in rows])
    assert np.max(np.abs(vals - degenerate_value_exact(xs))) <= 1e-2


# ----------------------------------------------------------------------
# verify
# ----------------------------------------------------------------------


def test_verify_degenerate_all_pass(tmp_path):
    cfg = _write_config(
        tmp_path,
        _degenerate_cfg(
            sim={"n_paths": 2000, "seed": 1, "x0_list": [0.0]},
            oracle={"n": 500, "dt": 1e-3, "x_hi": 2.0},
        ),
    )
    out = tmp_path / "out"
    assert _run(["solve", "--config", cfg, "--out", out]) == 0
    assert _run(["verify", "--config", cfg, "--out", out]) == 0
    rep = json.loads((out / "verify.json").read_text())
    assert rep["pass"]
    assert all(rep["checks"].values())
    assert rep["oracle_gap"] <= 5e-3 * 12.1  # relative to V(x_hi)
    assert any(r["strategy"] == "band" for r in rep["mc_table"])


def test_verify_requires_solve_first(tmp_path):
    cfg = _write_config(tmp_path, _degenerate_cfg())
    assert _run(["verify", "--config", cfg, "--out", tmp_path / "empty"]) == 2


def test_verify_detects_tampered_grid(tmp_path):
    # scaling V breaks both the complementarity residual and the fixed
    # point of the one-claim-step operator
    cfg = _write_config(
        tmp_path,
        _degenerate_cfg(dx=5e-5, verify={"run_oracle": False, "run_mc": False}),
    )
    out = tmp_path / "out"
    assert _run(["solve", "--config", cfg, "--out", out]) == 0

    grid_path = out / "grid.csv"
    with open(grid_path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = list(reader)
    for row in rows:
        row[1] = format(float(row[1]) * 1.01, ".17g")
    with open(grid_path, "w", newline="\n") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)

    assert _run(["verify", "--config", cfg, "--out", out]) == 4
    rep = json.loads((out / "verify.json").read_text())
    assert not rep["checks"]["hjb"]
    assert not rep["checks"]["t_fixed"]
    assert not rep["pass"]


def test_grid_csv_formatting(tmp_path):
    cfg = _write_config(tmp_path, _degenerate_cfg(dx=1e-2, x_hi=1.0))
    out = tmp_path / "out"
    assert _run(["solve", "--config", cfg, "--out", out]) == 0
    raw = (out / "grid.csv").read_bytes()
    assert b"\r" not in raw  # LF endings
    text = raw.decode("utf-8")
    # 17 significant digits round-trip doubles exactly
    line = text.splitlines()[1].split(",")
    assert float(line[1]) == float(format(float(line[1]), ".17g"))


def test_unknown_subcommand(tmp_path):
    with pytest.raises(SystemExit):
        main(["plot", "--config", "x.json"])
