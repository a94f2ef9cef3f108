import json

import pytest
import yaml

from app.core.errors import ConfigError
from app.services.scenario_service import (builtin_scenarios, config_from_dict, list_scenarios, load_config,
                                           load_config_file, require_valid, scenario_document,
                                           validate_assumptions)

from conftest import make_config, make_document


def _condition(report, name):
    return next(c for c in report.conditions if c.name == name)


def test_builtin_catalog_names():
    assert list_scenarios() == ["axisym-robin", "high-peclet-beta3", "linear-advection", "saturating-flux"]


@pytest.mark.parametrize("name", ["linear-advection", "high-peclet-beta3", "saturating-flux", "axisym-robin"])
def test_builtin_scenarios_pass_validation(name):
    cfg = make_config(name)
    report = validate_assumptions(cfg, points=24)
    assert report.passed, [c.name for c in report.failures()]
    assert report.scenario == name


def test_builtin_documents_share_common_settings():
    cfg = builtin_scenarios("linear-advection")
    assert cfg.length == 4.0
    assert cfg.horizon == 1.0
    assert cfg.epsilons == [0.2, 0.1, 0.05, 0.025]
    assert cfg.grid.nx == 200 and cfg.grid.nt == 50
    assert builtin_scenarios("high-peclet-beta3").high_peclet


def test_unknown_scenario():
    with pytest.raises(ConfigError) as info:
        scenario_document("nope")
    assert info.value.details["key"] == "scenario"


def test_scenario_key_overlays_builtin():
    cfg = config_from_dict({"scenario": "linear-advection", "epsilons": [0.3, 0.2, 0.1], "grid": {"nx": 80}})
    assert cfg.epsilons == [0.3, 0.2, 0.1]
    assert cfg.grid.nx == 80
    assert cfg.grid.nt == 50


@pytest.mark.parametrize("change, key", [
    ({"epsilons": [0.1, 0.2]}, "epsilons"),
    ({"epsilons": [1.5]}, "epsilons"),
    ({"length": -1.0}, "length"),
    ({"beta": 0.5}, "beta"),
    ({"cross_section": {"kind": "disk"}}, "cross_section"),
])
def test_schema_violations_name_the_key(change, key):
    with pytest.raises(ConfigError) as info:
        config_from_dict(make_document(**change))
    assert info.value.details["key"].startswith(key)


def test_support_margin_must_fit():
    with pytest.raises(ConfigError):
        config_from_dict(make_document(delta1=1.0))


def test_polygon_must_enclose_origin():
    section = {"kind": "polygon", "vertices": [[1.0, 1.0], [2.0, 1.0], [2.0, 2.0]]}
    with pytest.raises(ConfigError):
        config_from_dict(make_document(cross_section=section))


def test_load_config_rejects_bad_json():
    with pytest.raises(ConfigError) as info:
        load_config("{not json")
    assert info.value.details["key"] == "document"


def test_load_config_file_json_and_yaml(tmp_path):
    document = make_document()
    json_path = tmp_path / "scenario.json"
    json_path.write_text(json.dumps(document))
    yaml_path = tmp_path / "scenario.yaml"
    yaml_path.write_text(yaml.safe_dump(document))
    assert load_config_file(json_path).document == load_config_file(yaml_path).document


def test_load_config_file_missing(tmp_path):
    with pytest.raises(ConfigError):
        load_config_file(tmp_path / "missing.json")


def test_identity_velocity_fails_inflow_speed():
    cfg = make_config(velocity={"catalog": "identity", "params": {}})
    report = validate_assumptions(cfg, points=16)
    condition = _condition(report, "positive-inflow-speed")
    assert not condition.passed
    assert condition.worst_point["s"] == 0.0
    assert not report.passed


def test_quadratic_boundary_fails_third_order_matching():
    cfg = make_config(boundary={"catalog": "quadratic", "params": {"a": 1.0}})
    report = validate_assumptions(cfg, points=16)
    assert _condition(report, "matching-conditions-boundary").passed
    assert not _condition(report, "third-order-matching").passed


def test_constant_start_fails_matching_conditions():
    cfg = make_config(interaction={"catalog": "constant-start", "params": {}})
    report = validate_assumptions(cfg, points=16)
    assert not _condition(report, "matching-conditions-interaction").passed


def test_intermediate_beta_is_refused():
    cfg = make_config(beta=2.0)
    report = validate_assumptions(cfg, points=16)
    assert not _condition(report, "beta-mode").passed
    with pytest.raises(ConfigError) as info:
        require_valid(cfg)
    assert "beta-mode" in info.value.details["failed"]


def test_high_peclet_makes_characteristic_conditions_informational():
    cfg = make_config("high-peclet-beta3", velocity={"catalog": "identity", "params": {}})
    report = validate_assumptions(cfg, points=16)
    condition = _condition(report, "positive-inflow-speed")
    assert not condition.passed
    assert not condition.required
    assert "positive-inflow-speed" not in [c.name for c in report.failures()]


def test_constants_are_recorded():
    report = validate_assumptions(make_config(), points=16)
    assert report.constants["C0"] == pytest.approx(1.0)
    assert report.constants["varsigma0"] == pytest.approx(1.0)
    assert {"C1", "C2", "C3", "C4"} <= set(report.constants)
