import copy
import json

import pytest
from coefficients import moment_order
from config import (
    config_hash,
    parse_config,
    problem_hash,
    problem_hash_of,
    validate_config,
)
from conftest import CONFIG_DIR
from constants import Case
from utils import AssumptionError, ConfigError


@pytest.mark.parametrize(
    "name, case",
    [
        ("defaults", Case.Q_DOMINANT),
        ("q_dominant", Case.Q_DOMINANT),
        ("p_dominant", Case.P_DOMINANT),
        ("balanced", Case.BALANCED),
    ],
)
def test_shipped_configs(name, case):
    cfg = parse_config(CONFIG_DIR / f"{name}.json")
    pspec, wspec = cfg.potential_spec(), cfg.weight_spec()
    assert moment_order(pspec.p, wspec.q, cfg.problem.s)[1] == case
    assert wspec.x0 == pspec.x0
    assert cfg.k_values == list(range(3, 10))
    assert cfg.make_grid().shape == (256, 256)


def test_defaults_are_filled_in(config_1d):
    cfg = validate_config(config_1d)
    assert cfg.solver.gs_tol == 1e-10
    assert cfg.solver.tau is None
    assert cfg.solver.init.value == "gaussian"
    assert cfg.sweep.chains == 1
    assert cfg.output.dir == "out"
    assert cfg.weight_spec().x0 == (0.0,)


def test_assumption_violation_is_reported(config_1d):
    config_1d["coefficients"]["potential"]["beta"] = 2.5
    with pytest.raises(AssumptionError) as info:
        validate_config(config_1d)
    assert any("(V2)" in v for v in info.value.violations)
    assert "coefficients.potential" in str(info.value)


def test_every_violation_is_listed(config_1d):
    del config_1d["coefficients"]["weight"]
    config_1d["grid"]["n"] = 100
    config_1d["problem"]["s"] = 2.0
    with pytest.raises(ConfigError) as info:
        validate_config(config_1d)
    paths = [v.split(":")[0] for v in info.value.violations]
    assert "coefficients.weight" in paths
    assert "grid.n" in paths
    assert "problem.s" in paths
    assert not isinstance(info.value, AssumptionError)


def test_unknown_keys_are_rejected(config_1d):
    config_1d["solver"]["tolerance"] = 1e-3
    with pytest.raises(ConfigError, match="solver.tolerance"):
        validate_config(config_1d)


def test_center_outside_central_half(config_1d):
    config_1d["coefficients"]["potential"]["x0"] = [7.0]
    with pytest.raises(AssumptionError, match="central half"):
        validate_config(config_1d)


def test_sweep_range(config_1d):
    config_1d["sweep"] = {"k_min": 6, "k_max": 4}
    with pytest.raises(ConfigError, match="sweep.k_max"):
        validate_config(config_1d)


def test_parse_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        parse_config(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        parse_config(broken)


def test_workers_from_environment(config_1d, monkeypatch):
    cfg = validate_config(config_1d)
    monkeypatch.delenv("FLEP_WORKERS", raising=False)
    assert cfg.workers() == 1
    monkeypatch.setenv("FLEP_WORKERS", "4")
    assert cfg.workers() == 4
    monkeypatch.setenv("FLEP_WORKERS", "four")
    with pytest.raises(ConfigError, match="FLEP_WORKERS"):
        cfg.workers()


def test_hashes(config_1d, tmp_path):
    cfg = validate_config(config_1d)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(config_1d, indent=4))
    again = parse_config(path)
    assert config_hash(again) == config_hash(cfg)
    assert len(config_hash(cfg)) == 64
    assert problem_hash(cfg) == problem_hash_of(1, 1.0, 256, 24.0, 1e-10)

    changed = copy.deepcopy(config_1d)
    changed["coefficients"]["potential"]["c"] = 0.2
    other = validate_config(changed)
    assert config_hash(other) != config_hash(cfg)
    assert problem_hash(other) == problem_hash(cfg)
    assert problem_hash_of(1, 1.0, 512, 24.0, 1e-10) != problem_hash(cfg)


def test_updated_overrides_only_given_values(config_1d):
    cfg = validate_config(config_1d)
    new = cfg.updated(solver={"seed": 5, "tau": None})
    assert new.solver.seed == 5
    assert new.solver.tau is None
    assert new.solver.tol == cfg.solver.tol
    assert cfg.solver.seed == 0
    with pytest.raises(ConfigError):
        cfg.updated(solver={"tau": -1.0})


def test_weight_center_must_match_potential(config_1d):
    config_1d["coefficients"]["weight"]["x0"] = [1.0]
    with pytest.raises(AssumptionError, match="coefficients.weight.x0"):
        validate_config(config_1d)
    config_1d["coefficients"]["weight"]["x0"] = [0.0]
    assert validate_config(config_1d).weight_spec().x0 == (0.0,)


@pytest.mark.parametrize("boxes", [0, 5])
def test_box_count_is_bounded(config_1d, boxes):
    config_1d.setdefault("solver", {})["boxes"] = boxes
    with pytest.raises(ConfigError, match="solver.boxes"):
        validate_config(config_1d)
