"""Scenario files.

A scenario is a YAML document with the sections ``simulation``, ``vehicle``,
``initial_state``, ``safety``, ``nominal`` and ``reference``. See the packaged
``scenarios/circle_geofence.yaml`` for every key.
"""

import logging
from pathlib import Path

import numpy as np
import yaml

from safecopter import settings
from safecopter.barriers import SafetyConfig
from safecopter.dynamics import AugmentedState, VehicleParams, effectiveness_matrix
from safecopter.exceptions import ConfigurationError
from safecopter.nominal import REFERENCES, NominalGains
from safecopter.simulation import Scenario

logger = logging.getLogger(__name__)


def _section(data, name):
    section = data.get(name)
    if not isinstance(section, dict):
        raise ConfigurationError(f"scenario section {name!r} is missing or not a mapping")
    return section


def _require(section, key, where):
    try:
        return section[key]
    except KeyError:
        raise ConfigurationError(f"scenario key {where}.{key} is missing") from None


def _vector(value, where, size=3):
    vector = np.asarray(value, dtype=float)
    if vector.shape != (size,):
        raise ConfigurationError(f"{where} must have {size} entries, got {value!r}")
    return vector


def vehicle_from_dict(section):
    kind = section.get("type", "hexacopter_x")
    if kind != "hexacopter_x" and "effectiveness_matrix" not in section:
        raise ConfigurationError(f"unknown vehicle type {kind!r}")
    m = float(_require(section, "mass", "vehicle"))
    g = float(section.get("gravity", 9.81))
    inertia = np.asarray(_require(section, "inertia", "vehicle"), dtype=float)
    if inertia.ndim == 1:
        inertia = np.diag(inertia)
    if "effectiveness_matrix" in section:
        B = np.asarray(section["effectiveness_matrix"], dtype=float)
    else:
        B = effectiveness_matrix(
            arm_length=float(_require(section, "arm_length", "vehicle")),
            torque_coefficient=float(_require(section, "torque_coefficient", "vehicle")),
            rotor_count=int(section.get("rotor_count", 6)),
            first_rotor_angle=np.deg2rad(float(section.get("first_rotor_angle", 30.0))),
        )
    u_max = float(section.get("max_rotor_thrust_ratio", 0.6371)) * m * g
    return VehicleParams(m=m, J=inertia, g=g, B=B, u_max=u_max)


def safety_from_dict(section, params):
    slopes = section.get("slopes", {})
    return SafetyConfig.from_limits(
        omega_max=np.deg2rad(np.asarray(_require(section, "max_body_rate", "safety"), dtype=float)),
        v_max=np.asarray(_require(section, "max_speed", "safety"), dtype=float),
        p_max=np.asarray(_require(section, "geofence_radius", "safety"), dtype=float),
        p_d=_vector(_require(section, "geofence_center", "safety"), "safety.geofence_center"),
        z_B_d=_vector(section.get("desired_axis", [0.0, 0.0, 1.0]), "safety.desired_axis"),
        theta_bar=np.deg2rad(float(_require(section, "max_tilt", "safety"))),
        T_min=float(section.get("min_thrust_ratio", 0.05)) * params.hover_thrust,
        **{key: float(value) for key, value in slopes.items()},
        **{
            key: section[key]
            for key in ("c_v", "c_p", "mu_v", "mu_p", "lambda_v", "lambda_p")
            if key in section
        },
    )


def initial_state_from_dict(section, params):
    roll, pitch, yaw = np.deg2rad(
        _vector(_require(section, "euler", "initial_state"), "initial_state.euler")
    )
    return AugmentedState.from_euler(
        p=_vector(_require(section, "position", "initial_state"), "initial_state.position"),
        v=_vector(_require(section, "velocity", "initial_state"), "initial_state.velocity"),
        roll=roll,
        pitch=pitch,
        yaw=yaw,
        omega=np.deg2rad(
            _vector(section.get("body_rates", [0.0, 0.0, 0.0]), "initial_state.body_rates")
        ),
        T=float(section.get("thrust", params.hover_thrust)),
    )


def reference_from_dict(section):
    section = dict(section)
    kind = section.pop("type", "circle")
    try:
        reference_class = REFERENCES[kind]
    except KeyError:
        raise ConfigurationError(
            f"unknown reference {kind!r}, expected one of {sorted(REFERENCES)}"
        ) from None
    for key in ("center", "point"):
        if key in section:
            section[key] = tuple(_vector(section[key], f"reference.{key}"))
    return reference_class(**section)


def scenario_from_dict(data, duration=None, safety_filter=None, seed=None, name=None):
    if not isinstance(data, dict):
        raise ConfigurationError("scenario file must contain a mapping")
    try:
        simulation = _section(data, "simulation")
        params = vehicle_from_dict(_section(data, "vehicle"))
        cfg = safety_from_dict(_section(data, "safety"), params)
        initial_state = initial_state_from_dict(_section(data, "initial_state"), params)
        gains = NominalGains(**data.get("nominal", {}))
        reference = reference_from_dict(data.get("reference", {"type": "circle"}))
    except (TypeError, ValueError) as err:
        raise ConfigurationError(f"invalid scenario: {err}") from err

    scenario = Scenario(
        initial_state=initial_state,
        params=params,
        cfg=cfg,
        gains=gains,
        reference=reference,
        duration=float(simulation.get("duration", 20.0)),
        dt=float(_require(simulation, "dt", "simulation")),
        safety_filter=bool(simulation.get("safety_filter", True)),
        seed=simulation.get("seed"),
        name=name or data.get("name", "scenario"),
    )
    overrides = {
        key: value
        for key, value in (
            ("duration", duration),
            ("safety_filter", safety_filter),
            ("seed", seed),
        )
        if value is not None
    }
    return scenario.replace(**overrides) if overrides else scenario


def load_scenario(path=None, duration=None, safety_filter=None, seed=None):
    """Read a scenario file; overrides replace the file's values when not ``None``."""
    path = Path(path) if path is not None else settings.DEFAULT_SCENARIO
    try:
        with open(path, encoding="utf-8") as fp:
            data = yaml.safe_load(fp)
    except OSError as err:
        raise ConfigurationError(f"cannot read scenario {path}: {err}") from err
    except yaml.YAMLError as err:
        raise ConfigurationError(f"cannot parse scenario {path}: {err}") from err
    logger.debug("Config: loaded scenario %s", path)
    return scenario_from_dict(data, duration=duration, safety_filter=safety_filter, seed=seed)
