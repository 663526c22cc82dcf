import csv
import json
import math

import pytest
from click.testing import CliRunner
from openpyxl import load_workbook

from app import create_cli
from config import DefaultConfig
from exceptions import DegenerateFitError
from models.data_classes import VerificationReport
from services.closed_loop_service import ClosedLoopService

SCALAR = {"system": {"kind": "scalar"}, "omega": 0.5, "T": 1.0, "x0": [1.0], "trials": 3}
ROTATION = {"system": {"kind": "rotation"}, "omega": 1.0, "T": 1.0, "x0": [1.0, 0.0], "trials": 3}


@pytest.fixture()
def invoke(tmp_path):
    runner = CliRunner()
    cli = create_cli()

    def _invoke(command, config_path, *extra, out="out"):
        out_dir = tmp_path / out
        result = runner.invoke(
            cli, [command, "--config", str(config_path), "--out", str(out_dir), *extra]
        )
        return result, out_dir

    return _invoke


def _read_csv(path):
    with path.open(encoding="utf-8", newline="") as handle:
        return list(csv.reader(handle))


def test_commands_are_registered():
    assert set(create_cli().commands) == {"gramian", "stabilize", "verify", "sweep"}


def test_gramian_scalar_report(invoke, write_config):
    result, out_dir = invoke("gramian", write_config(SCALAR))
    assert result.exit_code == 0, result.output
    report = json.loads((out_dir / "gramian.json").read_text(encoding="utf-8"))
    assert report["lambda"][0][0] == pytest.approx(0.8160603, abs=1e-7)
    assert report["c_matrix"][0][0] == pytest.approx(1.0 / 0.8160603, abs=1e-6)
    assert report["c1"] == pytest.approx(1.0)
    assert report["riccati_residual"] <= 1e-10


def test_gramian_zero_input_exits_not_observable(invoke, write_config):
    payload = {"system": {"kind": "matrices", "a_matrix": [[0.0, 1.0], [-1.0, 0.0]], "b_matrix": [[0.0], [0.0]]}}
    result, _ = invoke("gramian", write_config(payload))
    assert result.exit_code == 2


def test_gramian_matrix_files(invoke, write_config, tmp_path):
    (tmp_path / "a.txt").write_text("0 1\n-1 0\n", encoding="utf-8")
    (tmp_path / "b.txt").write_text("1\n0\n", encoding="utf-8")
    payload = {"system": {"kind": "matrices", "a_matrix": "a.txt", "b_matrix": "b.txt"}}
    result, out_dir = invoke("gramian", write_config(payload))
    assert result.exit_code == 0, result.output
    assert json.loads((out_dir / "gramian.json").read_text(encoding="utf-8"))["system"]["state_dim"] == 2


def test_malformed_config_exits_one(invoke, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json", encoding="utf-8")
    result, _ = invoke("gramian", path)
    assert result.exit_code == 1
    assert "malformed" in result.output


def test_ill_conditioned_exits_three(invoke, write_config, monkeypatch):
    monkeypatch.setattr(DefaultConfig, "COND_GUARD", 1.01)
    result, _ = invoke("gramian", write_config(ROTATION))
    assert result.exit_code == 3


def test_stabilize_scalar_trajectory(invoke, write_config):
    result, out_dir = invoke("stabilize", write_config({**SCALAR, "horizon": 4.0}))
    assert result.exit_code == 0, result.output

    rows = _read_csv(out_dir / "trajectory.csv")
    assert rows[0] == ["t", "x_1", "omega_norm", "bound"]
    first, last = [float(v) for v in rows[1]], [float(v) for v in rows[-1]]
    assert last[0] == pytest.approx(4.0)
    assert last[2] <= math.exp(-0.5 * 4.0) * first[2] + 1e-6
    assert all(math.isfinite(float(v)) for row in rows[1:] for v in row)
    assert (out_dir / "trajectory.csv").read_bytes().count(b"\r") == 0


def test_stabilize_zero_horizon(invoke, write_config):
    result, out_dir = invoke("stabilize", write_config({**SCALAR, "horizon": 0.0}))
    assert result.exit_code == 0, result.output
    rows = _read_csv(out_dir / "trajectory.csv")
    assert len(rows) == 2
    assert rows[1][-1] == rows[1][-2]


def test_stabilize_rotation_reports_rate(invoke, write_config):
    result, out_dir = invoke("stabilize", write_config(ROTATION))
    assert result.exit_code == 0, result.output
    summary = json.loads((out_dir / "stabilize.json").read_text(encoding="utf-8"))["summary"]
    assert summary["fitted_rate"] >= 1.0
    assert summary["decay_margin"] == pytest.approx(summary["fitted_rate"] - 1.0)


def test_stabilize_decay_violation_exits_four(invoke, write_config, monkeypatch):
    def broken(self, trajectory, bundle, omega=None, tolerance=None):
        report = VerificationReport()
        report.add("decay_bound", 1.0, 1e-6)
        return report

    monkeypatch.setattr(ClosedLoopService, "verify_decay", broken)
    result, out_dir = invoke("stabilize", write_config(SCALAR))
    assert result.exit_code == 4
    assert (out_dir / "trajectory.csv").exists()


def test_verify_scalar_passes(invoke, write_config):
    result, out_dir = invoke("verify", write_config(SCALAR))
    assert result.exit_code == 0, result.output
    report = json.loads((out_dir / "verification.json").read_text(encoding="utf-8"))
    assert report["passed"] is True
    assert {"riccati", "conjugation", "repU", "repL1", "repL2", "repIL", "decay_bound"} <= set(
        report["residuals"]
    )
    assert max(report["residuals"].values()) <= 1e-7


def test_verify_corrupted_bundle_fails(invoke, write_config):
    result, out_dir = invoke("verify", write_config(ROTATION), "--corrupt-c")
    assert result.exit_code == 5
    report = json.loads((out_dir / "verification.json").read_text(encoding="utf-8"))
    assert {"riccati", "conjugation"} <= set(report["failed"])
    assert "riccati" in result.output


def test_verify_is_deterministic(invoke, write_config):
    payload = {"system": {"kind": "random", "params": {"n": 4, "m": 1}}, "T": 5.0, "seed": 3, "trials": 2}
    path = write_config(payload)
    first, first_dir = invoke("verify", path, out="first")
    second, second_dir = invoke("verify", path, out="second")
    assert first.exit_code == second.exit_code
    assert (first_dir / "verification.json").read_bytes() == (second_dir / "verification.json").read_bytes()


def test_seed_override_is_recorded(invoke, write_config):
    result, out_dir = invoke("verify", write_config(ROTATION), "--seed", "42")
    assert result.exit_code == 0, result.output
    assert json.loads((out_dir / "verification.json").read_text(encoding="utf-8"))["seed"] == 42


def test_sweep_rotation(invoke, write_config):
    result, out_dir = invoke("sweep", write_config({**ROTATION, "omegas": [4, 1, 2, 0.5]}))
    assert result.exit_code == 0, result.output

    rows = _read_csv(out_dir / "sweep.csv")
    assert rows[0] == [
        "omega", "T_omega", "cond_lambda", "c1", "c2", "riccati_residual", "fitted_rate", "decay_margin",
    ]
    table = [[float(v) for v in row] for row in rows[1:]]
    assert [row[0] for row in table] == [0.5, 1.0, 2.0, 4.0]
    rates = [row[6] for row in table]
    assert all(rate >= row[0] for rate, row in zip(rates, table))
    assert rates == sorted(rates)

    sheet = load_workbook(out_dir / "sweep.xlsx").active
    assert sheet.cell(row=3, column=1).value == "omega"
    assert sheet.cell(row=4, column=1).value == pytest.approx(0.5)


def test_singleton_sweep_matches_stabilize(invoke, write_config):
    path = write_config({**ROTATION, "omegas": [1.0]})
    _, sweep_dir = invoke("sweep", path, out="sweep")
    _, stabilize_dir = invoke("stabilize", path, out="stabilize")

    row = _read_csv(sweep_dir / "sweep.csv")[1]
    summary = json.loads((stabilize_dir / "stabilize.json").read_text(encoding="utf-8"))["summary"]
    assert [float(v) for v in row] == list(summary.values())


def test_sweep_degenerate_fit_exits_four(invoke, write_config, monkeypatch):
    def degenerate(self, trajectory, floor=None):
        raise DegenerateFitError("decay fit needs 10 samples above the floor, got 3")

    monkeypatch.setattr(ClosedLoopService, "fitted_decay_rate", degenerate)
    result, out_dir = invoke("sweep", write_config({**ROTATION, "omegas": [0.5, 1.0]}))
    assert result.exit_code == 4

    rows = _read_csv(out_dir / "sweep.csv")
    assert [row[6:] for row in rows[1:]] == [["", ""], ["", ""]]
    sheet = load_workbook(out_dir / "sweep.xlsx").active
    assert sheet.cell(row=4, column=7).value is None


def test_sweep_wave_string(invoke, write_config):
    payload = {
        "system": {"kind": "wave_1d", "params": {"n": 20}},
        "mode": "verification",
        "omegas": [0.5, 1.0],
    }
    result, out_dir = invoke("sweep", write_config(payload))
    assert result.exit_code == 0, result.output

    table = [[float(v) for v in row] for row in _read_csv(out_dir / "sweep.csv")[1:]]
    assert [row[1] for row in table] == [6.0, 5.5]
    assert table[0][2] < table[1][2]


def test_cli_config_fills_missing_mode(write_config, tmp_path, monkeypatch):
    monkeypatch.delenv("GRAMSTAB_ENV", raising=False)
    out_dir = tmp_path / "out"
    result = CliRunner().invoke(
        create_cli("verification"),
        ["stabilize", "--config", str(write_config(SCALAR)), "--out", str(out_dir)],
    )
    assert result.exit_code == 0, result.output
    report = json.loads((out_dir / "stabilize.json").read_text(encoding="utf-8"))
    assert report["run"]["mode"] == "verification"
    assert report["trajectory"]["route"] == "direct"

    explicit = write_config({**SCALAR, "mode": "default"}, name="explicit.json")
    result = CliRunner().invoke(
        create_cli("verification"), ["stabilize", "--config", str(explicit), "--out", str(out_dir)]
    )
    assert json.loads((out_dir / "stabilize.json").read_text(encoding="utf-8"))["run"]["mode"] == "default"
