import json

import numpy as np
import pytest
from commands.command_utils import COMMAND_CONTRACT, CommandRegistry
from conftest import CONFIG_DIR, quintic_soliton
from main import app
from spectral_grid import Field, Grid, read_field, write_field
from typer.testing import CliRunner

runner = CliRunner()


@pytest.fixture
def config_file(tmp_path, config_1d):
    def write(**sections):
        data = json.loads(json.dumps(config_1d))
        for name, values in sections.items():
            data.setdefault(name, {}).update(values)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(data))
        return path

    return write


def invoke(*args):
    return runner.invoke(app, [str(a) for a in args], catch_exceptions=False)


def test_version():
    result = invoke("--version")
    assert result.exit_code == 0
    assert result.stdout.startswith("flep ")


def test_help_lists_commands():
    result = invoke()
    assert result.exit_code == 0
    for name in ("validate", "ground-state", "minimize", "sweep"):
        assert name in result.stdout


def test_validate_shipped_defaults(tmp_path):
    report = tmp_path / "validate.json"
    result = invoke(
        "-q", "validate", "--config", CONFIG_DIR / "defaults.json",
        "--report", report,
    )
    assert result.exit_code == 0
    data = json.loads(report.read_text())
    assert data["status"] == "ok"
    assert data["result"]["passed"] is True
    assert len(data["config_hash"]) == 64


def test_invalid_config_exits_with_one(config_file):
    path = config_file(coefficients={"weight": {"m_inf": 1.5, "q": 3.0}})
    result = invoke("-q", "validate", "--config", path)
    assert result.exit_code == 1


def test_ground_state_writes_field_and_report(tmp_path):
    out, report = tmp_path / "u.fld", tmp_path / "gs.json"
    result = invoke(
        "-q", "ground-state", "--dim", 1, "--s", 1.0, "--n", 256,
        "--box", 24.0, "--l", 1.0, "--out", out, "--report", report,
    )
    assert result.exit_code == 0
    data = json.loads(report.read_text())
    assert data["status"] == "ok"
    assert data["result"]["a_star"] == pytest.approx(
        3 * np.pi**2 / 4, rel=1e-5
    )
    assert data["result"]["certified"] is True
    assert data["result"]["gamma"]["1"]["truncated"] is False
    assert data["result"]["decay"]["fitted_exponent"] < 0
    stored = read_field(out)
    assert stored.s == 1.0
    assert stored.problem_hash == data["problem_hash"]
    assert str(out) in data["artifacts"]


def test_ground_state_certifies_over_box_doublings(tmp_path):
    report = tmp_path / "gs.json"
    result = invoke(
        "-q", "ground-state", "--dim", 1, "--s", 1.0, "--n", 256,
        "--box", 24.0, "--boxes", 2, "--no-decay", "--report", report,
    )
    assert result.exit_code == 0
    data = json.loads(report.read_text())["result"]
    assert data["boxes"] == [24.0, 48.0]
    assert data["extrapolated_pohozaev_residual"] <= 1e-6
    assert data["certified"] is True
    result = invoke("-q", "ground-state", "--dim", 1, "--s", 1.0, "--boxes", 9)
    assert result.exit_code == 1


def test_ground_state_needs_dimension_and_order():
    result = invoke("-q", "ground-state", "--s", 0.5)
    assert result.exit_code == 1


def test_minimize_below_threshold(tmp_path, config_file):
    report = tmp_path / "min.json"
    result = invoke(
        "-q", "minimize", "--config", config_file(),
        "--a-ratio", 0.5, "--report", report,
    )
    assert result.exit_code == 0
    data = json.loads(report.read_text())["result"]
    assert data["case"] == "Q_DOMINANT"
    assert 0 < data["I"] < 1.0
    assert data["a"] == pytest.approx(0.5 * data["a_star"])
    assert data["resolved"] is True


def test_minimize_refuses_foreign_ground_state(tmp_path, config_file):
    grid = Grid(1, 256, 24.0)
    foreign = tmp_path / "foreign.fld"
    write_field(
        foreign, Field.from_function(grid, quintic_soliton), 1.0, "0" * 64
    )
    report = tmp_path / "min.json"
    result = invoke(
        "-q", "minimize", "--config", config_file(),
        "--a-ratio", 0.5, "--ground-state", foreign, "--report", report,
    )
    assert result.exit_code == 1
    data = json.loads(report.read_text())
    assert data["status"] == "failed"
    assert "different problem" in data["error"]


def test_supercritical_sweep_exits_with_two(tmp_path, config_file):
    path = config_file(
        sweep={"a_ratios": [1.5]}, output={"dir": str(tmp_path / "out")}
    )
    report = tmp_path / "sweep.json"
    result = invoke("-q", "sweep", "--config", path, "--report", report)
    assert result.exit_code == 2
    data = json.loads(report.read_text())
    assert data["status"] == "failed"
    assert data["error_type"] == "EnergyUnboundedError"
    assert "energy unbounded" in data["error"]


def test_registry_finds_the_shipped_commands():
    names = CommandRegistry().search_commands()
    assert names == ["ground_state", "minimize", "sweep", "validate"]


def test_registry_requires_the_whole_command_contract(tmp_path):
    full = "\n".join(f"{n} = None" for n in COMMAND_CONTRACT)
    (tmp_path / "full.py").write_text(full)
    (tmp_path / "partial.py").write_text("command_app = None\n")
    (tmp_path / "mentions.py").write_text("# command_app name description\n")
    (tmp_path / "broken.py").write_text("name = (\n")
    (tmp_path / "_hidden.py").write_text(full)
    assert CommandRegistry().search_commands(tmp_path) == ["full"]
