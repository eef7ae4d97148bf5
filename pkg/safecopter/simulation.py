"""Fixed-step closed-loop simulation with a zero-order hold on the input."""

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from safecopter import settings
from safecopter.barriers import BarrierSnapshot, SafetyConfig, barrier_snapshot
from safecopter.dynamics import (
    AugmentedState,
    VehicleParams,
    WrenchRateInput,
    allocate,
    saturate,
    state_derivative,
)
from safecopter.exceptions import (
    ConfigurationError,
    IntegrationDiverged,
    SingularThrust,
)
from safecopter.nominal import CircleReference, NominalController, NominalGains
from safecopter.qp import QpSolution, filter_input
from safecopter.utils import orthonormalize, rotation_to_euler

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = (
    "t",
    "p_x", "p_y", "p_z",
    "v_x", "v_y", "v_z",
    "roll", "pitch", "yaw",
    "omega_x", "omega_y", "omega_z",
    "T",
    "T_dot", "M_x", "M_y", "M_z",
    "h_omega", "h0_zB", "h1_zB", "h0_v", "h_v", "h0_p", "h_p",
    "qp_status", "active_set", "solve_time_ms", "saturated",
)  # fmt: skip

TRAJECTORY_UNITS = (
    "t [s], p [m], v [m/s], roll/pitch/yaw [rad] (ZYX), omega [rad/s], T [N], "
    "T_dot [N/s], M [N m], barriers [-], solve_time_ms [ms], u_i [N]"
)


def trajectory_columns(rotor_count):
    """Column order of the trajectory CSV: the fixed columns, then one per rotor."""
    return TRAJECTORY_COLUMNS + tuple(f"u_{i + 1}" for i in range(rotor_count))


@dataclass
class Scenario:
    initial_state: AugmentedState
    params: VehicleParams
    cfg: SafetyConfig
    gains: NominalGains = field(default_factory=NominalGains)
    reference: object = field(default_factory=CircleReference)
    duration: float = 20.0
    dt: float = 0.005
    safety_filter: bool = True
    seed: Optional[int] = None
    name: str = "scenario"

    @property
    def step_count(self):
        return int(round(self.duration / self.dt))

    def validate(self):
        if not self.dt > 0:
            raise ConfigurationError(f"control period must be positive, got {self.dt}")
        if self.duration < 0:
            raise ConfigurationError(f"duration must be non-negative, got {self.duration}")
        if not self.safety_filter:
            return
        try:
            snapshot = barrier_snapshot(self.initial_state, self.cfg, self.params)
        except SingularThrust as err:
            raise ConfigurationError(f"initial state: {err}") from err
        outside = [
            name
            for name in ("h_omega", "h0_zB", "h1_zB", "h0_v", "h_v", "h0_p", "h_p")
            if not getattr(snapshot, name) >= 0
        ]
        if outside:
            raise ConfigurationError(
                f"initial state lies outside the safe set: {', '.join(outside)} < 0"
            )

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class TrajectoryRecord:
    t: float
    state: AugmentedState
    nu: WrenchRateInput
    u: np.ndarray
    barriers: BarrierSnapshot
    qp_status: Optional[str]
    active_set: tuple
    solve_time: float
    saturated: bool

    def as_row(self):
        x = self.state
        return [
            self.t,
            *x.p,
            *x.v,
            *rotation_to_euler(x.R),
            *x.omega,
            x.T,
            self.nu.T_dot,
            *self.nu.M,
            *(getattr(self.barriers, name) for name in BarrierSnapshot.names()),
            self.qp_status or "off",
            ";".join(str(i) for i in self.active_set),
            1e3 * self.solve_time,
            int(self.saturated),
            *self.u,
        ]


def _intervals(times, violated):
    """Closed time intervals over which ``violated`` is true."""
    intervals = []
    start = None
    for t, flag in zip(times, violated):
        if flag and start is None:
            start = t
        if not flag and start is not None:
            intervals.append([start, previous])
            start = None
        previous = t
    if start is not None:
        intervals.append([start, previous])
    return intervals


def _minimum(values):
    values = np.asarray(values, dtype=float)
    if values.size == 0 or np.all(np.isnan(values)):
        return None
    return float(np.nanmin(values))


@dataclass
class SafetyReport:
    scenario: str
    safety_filter: bool
    duration: float
    dt: float
    step_count: int
    minima: dict
    violations: dict
    relaxed_steps: int
    saturated_steps: int
    timing: dict

    @property
    def safe(self):
        return not any(self.violations[name] for name in BarrierSnapshot.FAMILIES)

    def first_violation(self, name):
        intervals = self.violations.get(name) or []
        return intervals[0][0] if intervals else None

    @classmethod
    def from_records(cls, scenario, records, tolerance=None):
        tolerance = settings.VIOLATION_TOLERANCE if tolerance is None else tolerance
        times = [record.t for record in records]
        minima = {}
        violations = {}
        for name in BarrierSnapshot.names():
            values = [getattr(record.barriers, name) for record in records]
            minima[name] = _minimum(values)
            if name in BarrierSnapshot.FAMILIES:
                violations[name] = _intervals(times, [v < -tolerance for v in values])
        solve_ms = 1e3 * np.array([record.solve_time for record in records])
        return cls(
            scenario=scenario.name,
            safety_filter=scenario.safety_filter,
            duration=scenario.duration,
            dt=scenario.dt,
            step_count=len(records),
            minima=minima,
            violations=violations,
            relaxed_steps=sum(r.qp_status == QpSolution.RELAXED for r in records),
            saturated_steps=sum(r.saturated for r in records),
            timing={
                "mean_ms": float(np.mean(solve_ms)) if solve_ms.size else 0.0,
                "max_ms": float(np.max(solve_ms)) if solve_ms.size else 0.0,
            },
        )

    def to_dict(self):
        return {
            "scenario": self.scenario,
            "safety_filter": self.safety_filter,
            "duration": self.duration,
            "dt": self.dt,
            "step_count": self.step_count,
            "safe": self.safe,
            "minima": self.minima,
            "violations": self.violations,
            "relaxed_steps": self.relaxed_steps,
            "saturated_steps": self.saturated_steps,
            "timing": self.timing,
        }


def step(x, nu, dt, params, thrust_offset=0.0):
    """One RK4 step with ``nu`` held, followed by re-orthonormalisation of ``R``.

    ``thrust_offset`` is held with ``nu``; see :func:`state_derivative`.
    """

    def rate(vector):
        state = AugmentedState.from_vector(vector)
        return state_derivative(state, nu, params, thrust_offset).to_vector()

    y = x.to_vector()
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = rate(y)
        k2 = rate(y + 0.5 * dt * k1)
        k3 = rate(y + 0.5 * dt * k2)
        k4 = rate(y + dt * k3)
        y_next = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(y_next)):
        raise IntegrationDiverged()
    x_next = AugmentedState.from_vector(y_next)
    return dataclasses.replace(x_next, R=orthonormalize(x_next.R))


def run(scenario):
    """Simulate ``scenario``; returns the per-step records and the safety report."""
    scenario.validate()
    params, cfg = scenario.params, scenario.cfg
    controller = NominalController(scenario.reference, scenario.gains, params)
    x = scenario.initial_state
    n_steps = scenario.step_count
    records: List[TrajectoryRecord] = []
    was_saturated = False

    logger.info(
        "Simulation: %s, %d steps of %.4g s, safety filter %s",
        scenario.name,
        n_steps,
        scenario.dt,
        "on" if scenario.safety_filter else "off",
    )
    for k in range(n_steps + 1):
        t = k * scenario.dt
        try:
            nu = controller(x, t)
            if scenario.safety_filter:
                started = time.perf_counter()
                nu, solution, snapshot = filter_input(x, nu, cfg, params)
                solve_time = time.perf_counter() - started
                status, active_set = solution.status, solution.active_set
            else:
                snapshot = barrier_snapshot(x, cfg, params)
                status, active_set, solve_time = None, (), 0.0

            u, wrench, saturated = saturate(
                allocate(np.concatenate([[x.T], nu.M]), params), params
            )
            if saturated and not was_saturated:
                logger.warning("Simulation: rotor saturation at t=%.3f s", t)
            was_saturated = saturated
            applied, thrust_offset = nu, 0.0
            if saturated:
                # the rotors act with the saturated wrench for this step; T stays integrated
                applied = WrenchRateInput(T_dot=nu.T_dot, M=wrench[1:])
                thrust_offset = float(wrench[0]) - x.T

            records.append(
                TrajectoryRecord(
                    t=t,
                    state=x,
                    nu=nu,
                    u=u,
                    barriers=snapshot,
                    qp_status=status,
                    active_set=active_set,
                    solve_time=solve_time,
                    saturated=saturated,
                )
            )
            if k < n_steps:
                x = step(x, applied, scenario.dt, params, thrust_offset)
        except (SingularThrust, IntegrationDiverged) as err:
            logger.error("Simulation: %s failed at step %d (t=%.3f s)", scenario.name, k, t)
            raise err.at_step(k) from err

    report = SafetyReport.from_records(scenario, records)
    if scenario.safety_filter and not report.safe:
        logger.warning("Simulation: safety violated under the filter: %s", report.violations)
    logger.info(
        "Simulation: %s finished, min h0_p %.4g, %d relaxed, %d saturated steps",
        scenario.name,
        report.minima["h0_p"],
        report.relaxed_steps,
        report.saturated_steps,
    )
    return records, report
