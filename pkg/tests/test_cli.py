import sys

import orjson
import pandas as pd
import pytest
from typer.testing import CliRunner

from kgsolver import main as cli
from kgsolver.main import app

runner = CliRunner()

TIGHT = {"residual_tol": 1e-7, "energy_tol": 1e-11}


def write_config(tmp_path, **document):
    path = tmp_path / "run.json"
    path.write_bytes(orjson.dumps(document))
    return path


def read_table(path):
    with open(path, encoding="utf-8") as handle:
        units = handle.readline()
    assert units.startswith("# units: ")
    return pd.read_csv(path, skiprows=1)


def read_manifest(out):
    return orjson.loads((out / "manifest.json").read_bytes())


def test_solve_oscillator(tmp_path):
    config = write_config(tmp_path, grid={"n_per_axis": 24, "box_length": 12.0})
    out = tmp_path / "out"
    result = runner.invoke(app, ["solve", "-c", str(config), "-o", str(out)])
    assert result.exit_code == 0, result.output

    table = read_table(out / "solve.csv")
    assert list(table.columns) == [
        "g", "energy", "lambda", "mu_v", "delta_v", "interaction", "field_energy",
        "f_l2_norm", "residual", "iterations", "converged", "method",
    ]
    assert table["energy"][0] == pytest.approx(3.0, abs=1e-6)
    assert table["interaction"][0] == 0.0

    manifest = read_manifest(out)
    assert manifest["exit_code"] == 0
    assert manifest["command"] == "solve"
    for name in ("solve.csv", "energy_trace.dat", "u_profile.dat", "manifest.json"):
        assert name in manifest["files"]
    assert all(stage["converged"] for stage in manifest["stages"])


def test_seed_override_is_recorded(tmp_path):
    config = write_config(tmp_path, grid={"n_per_axis": 8, "box_length": 8.0}, seed=3)
    out = tmp_path / "out"
    result = runner.invoke(app, ["solve", "-c", str(config), "-o", str(out), "--seed", "42"])
    assert result.exit_code == 0, result.output
    assert read_manifest(out)["config"]["seed"] == 42


def test_invalid_config_exits_2_without_manifest(tmp_path):
    config = write_config(tmp_path, grid={"n_per_axis": 9, "box_length": 8.0})
    out = tmp_path / "out"
    result = runner.invoke(app, ["solve", "-c", str(config), "-o", str(out)])
    assert result.exit_code == 2
    assert "n_per_axis" in result.output
    assert not (out / "manifest.json").exists()


def test_output_dir_from_config(tmp_path):
    out = tmp_path / "configured"
    config = write_config(tmp_path, grid={"n_per_axis": 8, "box_length": 8.0}, output_dir=str(out))
    result = runner.invoke(app, ["solve", "-c", str(config)])
    assert result.exit_code == 0, result.output
    assert (out / "manifest.json").exists()


def test_diagnose_decoupled(tmp_path):
    config = write_config(tmp_path, grid={"n_per_axis": 8, "box_length": 8.0})
    out = tmp_path / "out"
    result = runner.invoke(app, ["diagnose", "-c", str(config), "-o", str(out)])
    assert result.exit_code == 0, result.output
    table = read_table(out / "diagnose.csv").set_index("quantity")
    assert float(table.loc["w1_l1", "value"]) == 0.0
    assert float(table.loc["smallness_ratio", "value"]) == 0.0
    report = orjson.loads((out / "diagnose.json").read_bytes())
    assert report["existence"]["w1_l1"] == 0.0


def test_diagnose_flags_massless_nelson(tmp_path):
    config = write_config(
        tmp_path,
        model={"g": 1.0, "coupling": {"variant": "nelson"}, "dispersion": {"variant": "relativistic"}},
        grid={"n_per_axis": 8, "box_length": 8.0},
    )
    out = tmp_path / "out"
    result = runner.invoke(app, ["diagnose", "-c", str(config), "-o", str(out)])
    assert result.exit_code == 0, result.output
    table = read_table(out / "diagnose.csv").set_index("quantity")
    assert float(table.loc["ir_origin_excluded", "value"]) == 1.0
    assert float(table.loc["w1_l1", "value"]) > 0
    assert read_manifest(out)["stages"][0]["detail"] == "grid-divergent IR band"


def test_sweep_uv_columns(tmp_path):
    config = write_config(
        tmp_path,
        model={"g": 0.5},
        grid={"n_per_axis": 8, "box_length": 8.0},
        minimize=TIGHT,
        study={"lambda_list": [1.0, 2.0]},
    )
    out = tmp_path / "out"
    result = runner.invoke(app, ["sweep-uv", "-c", str(config), "-o", str(out), "--threads", "1"])
    assert result.exit_code == 0, result.output
    table = read_table(out / "sweep_uv.csv")
    assert list(table.columns) == [
        "lambda", "energy", "u_qv_distance", "f_zomega_distance", "residual", "converged",
    ]
    assert len(table) == 3
    assert table["u_qv_distance"].iloc[-1] == 0.0


def test_sweep_g_writes_fit(tmp_path):
    config = write_config(
        tmp_path,
        grid={"n_per_axis": 8, "box_length": 8.0},
        minimize=TIGHT,
        study={"g_list": [0.02, 0.04, 0.08]},
    )
    out = tmp_path / "out"
    result = runner.invoke(app, ["sweep-g", "-c", str(config), "-o", str(out), "--threads", "1"])
    assert result.exit_code == 0, result.output

    table = read_table(out / "sweep_g.csv")
    assert list(table.columns) == ["g", "energy", "mu_v", "i2", "remainder", "residual", "converged"]
    assert list(table["g"]) == [0.02, 0.04, 0.08]
    assert (table["remainder"] <= 1e-12).all()
    assert table["converged"].all()
    fit = read_table(out / "sweep_g_fit.csv")
    assert 3.0 <= fit["fitted_exponent"][0] <= 5.0
    assert fit["i2"][0] == pytest.approx(table["i2"][0])

    manifest = read_manifest(out)
    assert manifest["exit_code"] == 0
    for name in ("sweep_g.csv", "sweep_g_fit.csv", "remainder_vs_g.dat"):
        assert name in manifest["files"]
    assert [stage["name"] for stage in manifest["stages"]] == ["sweep-g"]


def test_ir_check_reports_each_kappa(tmp_path):
    config = write_config(
        tmp_path,
        model={"g": 0.3, "coupling": {"variant": "nelson"}, "dispersion": {"variant": "relativistic"}},
        grid={"n_per_axis": 8, "box_length": 8.0},
        minimize=TIGHT,
        study={"box_doublings": 1, "kappa_list": [0.0, 0.5]},
    )
    out = tmp_path / "out"
    result = runner.invoke(app, ["ir-check", "-c", str(config), "-o", str(out), "--threads", "1"])
    assert result.exit_code == 0, result.output

    table = read_table(out / "ir_check.csv")
    assert list(table.columns) == ["kappa", "box_length", "f_l2_norm", "energy", "residual", "converged"]
    assert len(table) == 4
    bare = table[table["kappa"] == 0.0]
    assert list(bare["box_length"]) == [8.0, 16.0]
    assert bare["f_l2_norm"].iloc[1] > bare["f_l2_norm"].iloc[0]

    manifest = read_manifest(out)
    assert manifest["exit_code"] == 0
    assert [stage["name"] for stage in manifest["stages"]] == ["ir-check kappa=0", "ir-check kappa=0.5"]
    assert "ir_f_norm_kappa_0.5.dat" in manifest["files"]


def test_ir_check_rejects_polaron_coupling(tmp_path):
    config = write_config(tmp_path, model={"g": 0.3}, grid={"n_per_axis": 8, "box_length": 8.0})
    out = tmp_path / "out"
    result = runner.invoke(app, ["ir-check", "-c", str(config), "-o", str(out)])
    assert result.exit_code == 2
    manifest = read_manifest(out)
    assert manifest["exit_code"] == 2
    stages = manifest["stages"]
    assert [stage["name"] for stage in stages] == ["ir-check"]
    assert "Nelson" in stages[0]["detail"]
    assert not stages[0]["converged"]


def test_scan_gstar(tmp_path):
    config = write_config(
        tmp_path,
        model={"coupling": {"variant": "critical"}},
        grid={"n_per_axis": 16, "box_length": 8.0},
        minimize=TIGHT,
        study={"gstar_list": [0.1, 0.6]},
    )
    out = tmp_path / "out"
    result = runner.invoke(app, ["scan-gstar", "-c", str(config), "-o", str(out), "--threads", "1"])
    assert result.exit_code == 0, result.output

    table = read_table(out / "scan_gstar.csv")
    assert list(table.columns) == [
        "g", "energy", "kinetic", "interaction_unit", "coupling_bound",
        "kinetic_fraction", "collapsed", "residual", "converged",
    ]
    assert list(table["collapsed"]) == [False, True]
    assert table["coupling_bound"][0] > 0.1

    manifest = read_manifest(out)
    assert manifest["exit_code"] == 0
    assert "kinetic_vs_g.dat" in manifest["files"]
    (stage,) = manifest["stages"]
    assert stage["name"] == "scan-gstar"
    assert "first collapse at g=0.6" in stage["detail"]


def test_scan_gstar_rejects_polaron(tmp_path):
    config = write_config(tmp_path, grid={"n_per_axis": 8, "box_length": 8.0})
    out = tmp_path / "out"
    result = runner.invoke(app, ["scan-gstar", "-c", str(config), "-o", str(out)])
    assert result.exit_code == 2
    assert read_manifest(out)["exit_code"] == 2


def test_perturb2_table(tmp_path):
    config = write_config(
        tmp_path,
        model={"g": 0.5},
        grid={"n_per_axis": 8, "box_length": 8.0},
        study={"n_eigenbasis": 20},
    )
    out = tmp_path / "out"
    result = runner.invoke(app, ["perturb2", "-c", str(config), "-o", str(out)])
    assert result.exit_code == 0, result.output
    table = read_table(out / "perturb2.csv")
    assert list(table.columns) == [
        "mu_v", "g", "i2", "t_nc", "t_nc_abs_k", "predicted_full_shift",
        "predicted_full_shift_abs_k", "n_eigenbasis",
    ]
    row = table.iloc[0]
    assert row["g"] == 0.5
    assert row["n_eigenbasis"] == 20
    assert row["t_nc"] > 0
    assert row["predicted_full_shift"] == pytest.approx(0.25 * (row["i2"] + row["t_nc"]))
    manifest = read_manifest(out)
    assert manifest["exit_code"] == 0
    assert manifest["stages"][0]["name"] == "perturb2"


def test_probe_ineq(tmp_path):
    config = write_config(
        tmp_path,
        model={"g": 1.0},
        grid={"n_per_axis": 8, "box_length": 8.0},
        study={"n_trials": 5},
    )
    out = tmp_path / "out"
    result = runner.invoke(app, ["probe-ineq", "-c", str(config), "-o", str(out)])
    assert result.exit_code == 0, result.output
    table = read_table(out / "probe_ineq.csv")
    assert set(table["name"]) == {"l1_sup", "weak3_l1", "weak3_l2", "h1_form"}
    assert (table.loc[table["name"] == "l1_sup", "max_ratio"] <= 1.0 + 1e-12).all()


def test_fock_check(tmp_path):
    config = write_config(
        tmp_path,
        model={"g": 0.05},
        grid={"n_per_axis": 8, "box_length": 8.0},
        minimize=TIGHT,
        study={"coherent_trials": 10},
    )
    out = tmp_path / "out"
    result = runner.invoke(app, ["fock-check", "-c", str(config), "-o", str(out)])
    assert result.exit_code == 0, result.output
    identities = read_table(out / "coherent_identities.csv")
    assert len(identities) == 10
    assert identities["ok"].all()
    mini = read_table(out / "mini_pauli_fierz.csv")
    assert mini["quasi_minus_full"][0] > 0
    assert abs(mini["second_order_ratio"][0] - 1.0) <= 0.25
    stages = [stage["name"] for stage in read_manifest(out)["stages"]]
    assert stages == ["coherent-identities", "mini-pauli-fierz", "second-order-gap"]


def test_fock_check_fails_outside_ratio_tolerance(tmp_path):
    config = write_config(
        tmp_path,
        model={"g": 0.05},
        grid={"n_per_axis": 8, "box_length": 8.0},
        minimize=TIGHT,
        study={"coherent_trials": 2, "fock_ratio_tol": 1e-12},
    )
    out = tmp_path / "out"
    result = runner.invoke(app, ["fock-check", "-c", str(config), "-o", str(out)])
    assert result.exit_code == 1
    manifest = read_manifest(out)
    assert manifest["exit_code"] == 1
    stages = {stage["name"]: stage["converged"] for stage in manifest["stages"]}
    assert stages["mini-pauli-fierz"]
    assert not stages["second-order-gap"]


def test_unknown_command_exits_2(monkeypatch):
    monkeypatch.setattr(sys, "argv", ["kgsolver", "no-such-command"])
    with pytest.raises(SystemExit) as info:
        cli.main()
    assert info.value.code == 2
