from __future__ import annotations

import dataclasses
import time

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from safecopter.barriers import BarrierSnapshot
from safecopter.checks import convergence_order
from safecopter.dynamics import WrenchRateInput, allocate, saturate
from safecopter.exceptions import ConfigurationError, IntegrationDiverged, SingularThrust
from safecopter.qp import QpSolution
from safecopter.simulation import (
    SafetyReport,
    _intervals,
    run,
    step,
    trajectory_columns,
)
from safecopter.utils import orthonormality_error

STATUS_COLUMN = trajectory_columns(6).index("qp_status")


class TestStep:
    def test_hover_fixed_point(self, hover_state, params):
        x = step(hover_state, WrenchRateInput.zero(), 0.01, params)
        np.testing.assert_allclose(x.to_vector(), hover_state.to_vector(), atol=1e-12)

    def test_principal_axis_spin(self, hover_state, params):
        x = dataclasses.replace(hover_state, omega=np.array([0.0, 0.0, 1.0]))
        for _ in range(100):
            x = step(x, WrenchRateInput.zero(), 0.01, params)
        np.testing.assert_allclose(
            x.R, Rotation.from_euler("z", 1.0).as_matrix(), atol=1e-9
        )
        np.testing.assert_allclose(x.v, 0.0, atol=1e-12)

    def test_stays_orthonormal(self, hover_state, params):
        x = dataclasses.replace(hover_state, omega=np.array([2.0, -1.5, 1.0]))
        nu = WrenchRateInput(T_dot=0.0, M=[0.01, -0.02, 0.005])
        for _ in range(200):
            x = step(x, nu, 0.005, params)
        assert orthonormality_error(x.R) <= 1e-12

    def test_fourth_order(self, hover_state, params):
        x = dataclasses.replace(
            hover_state,
            v=np.array([0.5, -0.3, 0.2]),
            R=Rotation.from_euler("ZYX", [0.3, 0.2, -0.1]).as_matrix(),
            omega=np.array([1.0, -0.8, 0.5]),
        )
        nu = WrenchRateInput(T_dot=2.0, M=[0.05, -0.04, 0.02])
        assert convergence_order(x, nu, params) >= 3.8

    def test_divergence(self, hover_state, params):
        with pytest.raises(IntegrationDiverged):
            step(hover_state, WrenchRateInput(T_dot=np.inf, M=np.zeros(3)), 0.01, params)

    def test_thrust_offset(self, hover_state, params):
        x = step(hover_state, WrenchRateInput.zero(), 0.01, params, thrust_offset=-params.m)
        assert x.T == hover_state.T
        # a unit specific-force deficit along +e3 for 0.01 s
        np.testing.assert_allclose(x.v, [0.0, 0.0, 0.01], atol=1e-12)
        np.testing.assert_allclose(x.p, hover_state.p + [0.0, 0.0, 0.5e-4], atol=1e-12)


class TestScenario:
    def test_step_count(self, scenario):
        assert scenario.dt == 0.005
        assert scenario.step_count == 4000

    def test_initial_thrust_defaults_to_hover(self, scenario, params):
        assert scenario.initial_state.T == pytest.approx(params.hover_thrust)

    def test_validate_rejects_non_positive_dt(self, scenario):
        with pytest.raises(ConfigurationError):
            scenario.replace(dt=0.0).validate()

    def test_validate_rejects_negative_duration(self, scenario):
        with pytest.raises(ConfigurationError):
            scenario.replace(duration=-1.0).validate()

    def test_validate_rejects_unsafe_initial_state(self, scenario):
        x = dataclasses.replace(scenario.initial_state, v=np.array([3.0, 0.0, 0.0]))
        with pytest.raises(ConfigurationError, match="h0_v"):
            run(scenario.replace(initial_state=x))

    def test_validate_rejects_singular_initial_state(self, scenario):
        x = dataclasses.replace(scenario.initial_state, T=0.0)
        with pytest.raises(ConfigurationError):
            scenario.replace(initial_state=x).validate()

    def test_unsafe_initial_state_allowed_without_filter(self, scenario):
        x = dataclasses.replace(scenario.initial_state, v=np.array([3.0, 0.0, 0.0]))
        scenario.replace(initial_state=x, safety_filter=False).validate()


class TestRun:
    def test_zero_duration(self, scenario):
        records, report = run(scenario.replace(duration=0.0))
        assert len(records) == 1
        assert records[0].t == 0.0
        assert report.step_count == 1

    def test_short_run(self, short_scenario):
        records, report = run(short_scenario)
        assert len(records) == short_scenario.step_count + 1
        assert records[-1].t == pytest.approx(short_scenario.duration)
        assert report.safe
        assert all(record.qp_status == QpSolution.OPTIMAL for record in records)
        for record in records:
            assert record.barriers.h_v <= record.barriers.h0_v
            assert record.barriers.h_p <= record.barriers.h0_p
            assert len(record.u) == 6
            assert np.all(record.u >= 0.0)

    def test_deterministic(self, short_scenario):
        first, first_report = run(short_scenario)
        second, second_report = run(short_scenario)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.state.to_vector(), b.state.to_vector())
            np.testing.assert_array_equal(a.nu.as_array(), b.nu.as_array())
        first_dict, second_dict = first_report.to_dict(), second_report.to_dict()
        first_dict.pop("timing")
        second_dict.pop("timing")
        assert first_dict == second_dict

    def test_without_filter(self, short_scenario):
        records, report = run(short_scenario.replace(safety_filter=False))
        assert not report.safety_filter
        assert all(record.qp_status is None for record in records)
        assert records[0].as_row()[STATUS_COLUMN] == "off"

    def test_saturated_step_keeps_thrust_state(
        self, short_scenario, hover_state, params, monkeypatch: pytest.MonkeyPatch
    ):
        demand = WrenchRateInput(T_dot=0.0, M=[15.0, 0.0, 0.0])

        class _RollHard:
            def __init__(self, traj, gains, params):
                pass

            def __call__(self, x, t):
                return demand

        monkeypatch.setattr("safecopter.simulation.NominalController", _RollHard)
        scenario = short_scenario.replace(
            initial_state=hover_state, safety_filter=False, duration=0.01
        )
        records, report = run(scenario)
        _, wrench, saturated = saturate(
            allocate(np.concatenate([[hover_state.T], demand.M]), params), params
        )
        assert saturated
        assert wrench[0] > hover_state.T + 1.0
        assert report.saturated_steps == len(records) == 3
        np.testing.assert_array_equal(records[0].state.to_vector(), hover_state.to_vector())
        # T_dot is zero, so the thrust state never moves; only v sees the saturated thrust
        assert all(record.state.T == hover_state.T for record in records)
        v_z = params.g - wrench[0] / params.m
        assert records[1].state.v[2] == pytest.approx(scenario.dt * v_z, rel=1e-2)

    def test_failure_carries_step_index(self, short_scenario, monkeypatch: pytest.MonkeyPatch):
        def _filter(x, k_d, cfg, params):
            raise SingularThrust(0.0, cfg.T_min)

        monkeypatch.setattr("safecopter.simulation.filter_input", _filter)
        with pytest.raises(SingularThrust) as excinfo:
            run(short_scenario)
        assert excinfo.value.step_index == 0
        assert "step 0" in str(excinfo.value)

    def test_row_matches_columns(self, short_scenario):
        records, _ = run(short_scenario.replace(duration=0.0))
        row = records[0].as_row()
        columns = trajectory_columns(6)
        assert len(row) == len(columns)
        assert columns[-1] == "u_6"
        assert row[columns.index("h0_v")] == pytest.approx(0.51171875)

    def test_filter_step_time(self, scenario):
        # time is measured around row construction and the QP solve only
        records, report = run(scenario.replace(duration=0.5))
        assert all(record.solve_time > 0.0 for record in records)
        assert report.timing["mean_ms"] <= 2.0

    def test_unfiltered_steps_are_not_timed(self, short_scenario):
        records, report = run(short_scenario.replace(safety_filter=False))
        assert all(record.solve_time == 0.0 for record in records)
        assert report.timing == {"mean_ms": 0.0, "max_ms": 0.0}


class TestReport:
    def test_intervals(self):
        times = [0.0, 1.0, 2.0, 3.0, 4.0]
        assert _intervals(times, [False, True, True, False, True]) == [[1.0, 2.0], [4.0, 4.0]]
        assert _intervals(times, [False] * 5) == []

    def test_first_violation(self, short_scenario):
        records, _ = run(short_scenario.replace(duration=0.0))
        snapshot = dataclasses.replace(records[0].barriers, h0_p=-0.5)
        violated = dataclasses.replace(records[0], t=0.25, barriers=snapshot)
        report = SafetyReport.from_records(short_scenario, [records[0], violated])
        assert not report.safe
        assert report.violations["h0_p"] == [[0.25, 0.25]]
        assert report.first_violation("h0_p") == 0.25
        assert report.first_violation("h0_v") is None
        assert report.minima["h0_p"] == -0.5

    def test_nan_minimum(self, short_scenario):
        records, _ = run(short_scenario.replace(duration=0.0))
        snapshot = dataclasses.replace(records[0].barriers, h_v=np.nan)
        record = dataclasses.replace(records[0], barriers=snapshot)
        report = SafetyReport.from_records(short_scenario, [record])
        assert report.minima["h_v"] is None
        assert set(report.minima) == set(BarrierSnapshot.names())


@pytest.mark.slow
class TestFullScenario:
    def test_filter_keeps_the_vehicle_safe(self, scenario):
        started = time.perf_counter()
        _, report = run(scenario)
        assert time.perf_counter() - started <= 30.0
        assert report.safe
        assert report.minima["h0_p"] >= -1e-6
        assert report.relaxed_steps == 0
        assert report.timing["mean_ms"] <= 2.0

    def test_nominal_alone_leaves_the_geofence(self, scenario):
        _, report = run(scenario.replace(safety_filter=False))
        assert report.minima["h0_p"] < 0
        assert report.first_violation("h0_p") is not None
