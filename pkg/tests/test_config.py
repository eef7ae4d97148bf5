from __future__ import annotations

import copy
from pathlib import Path

import jsonschema
import numpy as np
import pytest
import yaml

from safecopter import settings
from safecopter.backends import FileBackend, validate_report
from safecopter.config import load_scenario, scenario_from_dict
from safecopter.exceptions import ConfigurationError, IntegrationDiverged, SingularThrust
from safecopter.nominal import CircleReference, HoverReference
from safecopter.simulation import run
from safecopter.utils import import_string, orthonormality_error, orthonormalize


@pytest.fixture
def scenario_data() -> dict:
    return yaml.safe_load(settings.DEFAULT_SCENARIO.read_text(encoding="utf-8"))


class TestLoadScenario:
    def test_default(self, scenario):
        assert scenario.name == "circle_geofence"
        assert scenario.duration == 20.0
        assert scenario.safety_filter
        assert isinstance(scenario.reference, CircleReference)
        assert scenario.cfg.T_min == pytest.approx(0.05 * scenario.params.hover_thrust)
        assert scenario.cfg.mu_v == (1000.0, 100.0)
        np.testing.assert_allclose(scenario.initial_state.omega, np.deg2rad([15.0, 15.0, 0.0]))

    def test_overrides(self):
        scenario = load_scenario(duration=1.5, safety_filter=False, seed=3)
        assert scenario.duration == 1.5
        assert not scenario.safety_filter
        assert scenario.seed == 3

    def test_missing_file(self, tmp_path: Path):
        with pytest.raises(ConfigurationError, match="cannot read"):
            load_scenario(tmp_path / "nope.yaml")

    def test_invalid_yaml(self, tmp_path: Path):
        path = tmp_path / "broken.yaml"
        path.write_text("simulation: [1, 2\n")
        with pytest.raises(ConfigurationError, match="cannot parse"):
            load_scenario(path)

    def test_not_a_mapping(self, tmp_path: Path):
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigurationError):
            load_scenario(path)


class TestScenarioFromDict:
    def test_missing_section(self, scenario_data):
        del scenario_data["safety"]
        with pytest.raises(ConfigurationError, match="safety"):
            scenario_from_dict(scenario_data)

    def test_missing_key(self, scenario_data):
        del scenario_data["vehicle"]["mass"]
        with pytest.raises(ConfigurationError, match="vehicle.mass"):
            scenario_from_dict(scenario_data)

    def test_wrong_vector_length(self, scenario_data):
        scenario_data["initial_state"]["position"] = [0.0, 0.0]
        with pytest.raises(ConfigurationError, match="initial_state.position"):
            scenario_from_dict(scenario_data)

    def test_unknown_reference(self, scenario_data):
        scenario_data["reference"] = {"type": "figure_eight"}
        with pytest.raises(ConfigurationError, match="figure_eight"):
            scenario_from_dict(scenario_data)

    def test_unknown_gain(self, scenario_data):
        scenario_data["nominal"]["K_x"] = 1.0
        with pytest.raises(ConfigurationError):
            scenario_from_dict(scenario_data)

    def test_hover_reference(self, scenario_data):
        scenario_data["reference"] = {"type": "hover", "point": [1.0, 0.0, -5.0]}
        scenario = scenario_from_dict(scenario_data)
        assert isinstance(scenario.reference, HoverReference)
        assert scenario.reference.point == (1.0, 0.0, -5.0)

    def test_explicit_effectiveness_matrix(self, scenario_data, params):
        data = copy.deepcopy(scenario_data)
        data["vehicle"]["effectiveness_matrix"] = params.B.tolist()
        np.testing.assert_allclose(scenario_from_dict(data).params.B, params.B)

    def test_explicit_thrust(self, scenario_data):
        scenario_data["initial_state"]["thrust"] = 40.0
        assert scenario_from_dict(scenario_data).initial_state.T == 40.0


class TestSettings:
    @pytest.mark.parametrize(
        "name, raw, expected",
        [
            ("SAFECOPTER_PROPAGATE_EXCEPTIONS", "yes", True),
            ("SAFECOPTER_PROPAGATE_EXCEPTIONS", "0", False),
            ("SAFECOPTER_QP_MAX_ROWS", "8", 8),
            ("SAFECOPTER_QP_SLACK_WEIGHT", "1e4", 1e4),
            ("SAFECOPTER_LOG_LEVEL", "DEBUG", "DEBUG"),
        ],
    )
    def test_environment_override(self, monkeypatch: pytest.MonkeyPatch, name, raw, expected):
        monkeypatch.setenv(name, raw)
        value = settings._setting(name, getattr(settings, name.replace("SAFECOPTER_", "")))
        assert value == expected
        assert type(value) is type(expected)

    def test_path_override(self, monkeypatch: pytest.MonkeyPatch, tmp_path: Path):
        monkeypatch.setenv("SAFECOPTER_DEFAULT_SCENARIO", str(tmp_path))
        assert settings._setting("SAFECOPTER_DEFAULT_SCENARIO", settings.DEFAULT_SCENARIO) == tmp_path

    def test_default_when_unset(self, monkeypatch: pytest.MonkeyPatch):
        monkeypatch.delenv("SAFECOPTER_QP_TOLERANCE", raising=False)
        assert settings._setting("SAFECOPTER_QP_TOLERANCE", 1e-9) == 1e-9

    def test_packaged_files_exist(self):
        assert Path(settings.DEFAULT_SCENARIO).is_file()
        assert Path(settings.REPORT_SCHEMA).is_file()

    def test_backend_is_importable(self):
        assert import_string(settings.OUTPUT_BACKEND) is FileBackend


class TestBackends:
    def test_report_round_trip(self, short_scenario, tmp_path: Path):
        records, report = run(short_scenario)
        backend = FileBackend()
        path = backend.report(report, tmp_path / "nested" / "report.json")
        assert path.is_file()
        csv_path = backend.trajectory(records, tmp_path / "trajectory.csv")
        assert len(csv_path.read_text().splitlines()) == len(records) + 2

    def test_schema_rejects_incomplete_report(self, short_scenario):
        _, report = run(short_scenario.replace(duration=0.0))
        data = report.to_dict()
        validate_report(data)
        del data["minima"]["h_p"]
        with pytest.raises(jsonschema.ValidationError):
            validate_report(data)

    def test_schema_rejects_unknown_field(self, short_scenario):
        _, report = run(short_scenario.replace(duration=0.0))
        data = dict(report.to_dict(), extra=1)
        with pytest.raises(jsonschema.ValidationError):
            FileBackend().report(data, Path("unused.json"))


class TestUtils:
    def test_import_string_errors(self):
        with pytest.raises(ImportError):
            import_string("nodots")
        with pytest.raises(ImportError):
            import_string("safecopter.backends.MissingBackend")

    def test_orthonormalize(self, rng):
        R = np.eye(3) + 1e-3 * rng.normal(size=(3, 3))
        assert orthonormality_error(orthonormalize(R)) <= 1e-14
        assert np.linalg.det(orthonormalize(R)) == pytest.approx(1.0)


class TestExceptions:
    def test_singular_thrust_at_step(self):
        err = SingularThrust(0.1, 2.0).at_step(12)
        assert err.step_index == 12
        assert err.thrust == 0.1
        assert "step 12" in str(err)

    def test_integration_diverged_at_step(self):
        err = IntegrationDiverged().at_step(3)
        assert err.step_index == 3
        assert "step 3" in str(err)
