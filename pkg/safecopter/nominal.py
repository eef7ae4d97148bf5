"""Nominal tracking controller producing ``(T_dot, M)``.

Geometric position control: a desired force from PD feedback on the position
error, its direction as the desired body z-axis and its magnitude as the
desired thrust. The thrust state tracks that magnitude through a first-order
law with analytic feed-forward and the torque steers ``z_B`` toward the desired
axis while regulating the yaw rate.
"""

import logging
from dataclasses import dataclass

import numpy as np

from safecopter import settings
from safecopter.dynamics import E3, WrenchRateInput
from safecopter.exceptions import ConfigurationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReferenceSample:
    p: np.ndarray
    v: np.ndarray
    a: np.ndarray
    j: np.ndarray
    yaw_rate: float = 0.0


@dataclass(frozen=True)
class CircleReference:
    """Horizontal circle around ``center`` with a vertical sine."""

    radius: float = 2.5
    rate: float = 0.5
    center: tuple = (0.0, 0.0, -5.0)
    vertical_amplitude: float = 2.5
    vertical_rate: float = 0.25
    yaw_rate: float = 0.0

    def __call__(self, t):
        r, w = self.radius, self.rate
        az, wz = self.vertical_amplitude, self.vertical_rate
        c, s = np.cos(w * t), np.sin(w * t)
        cz, sz = np.cos(wz * t), np.sin(wz * t)
        return ReferenceSample(
            p=np.asarray(self.center, dtype=float) + np.array([r * c, r * s, az * sz]),
            v=np.array([-r * w * s, r * w * c, az * wz * cz]),
            a=np.array([-r * w**2 * c, -r * w**2 * s, -az * wz**2 * sz]),
            j=np.array([r * w**3 * s, -r * w**3 * c, -az * wz**3 * cz]),
            yaw_rate=self.yaw_rate,
        )


@dataclass(frozen=True)
class HoverReference:
    point: tuple = (0.0, 0.0, -5.0)
    yaw_rate: float = 0.0

    def __call__(self, t):
        zeros = np.zeros(3)
        return ReferenceSample(
            p=np.asarray(self.point, dtype=float),
            v=zeros,
            a=zeros,
            j=zeros,
            yaw_rate=self.yaw_rate,
        )


REFERENCES = {
    "circle": CircleReference,
    "hover": HoverReference,
}


@dataclass(frozen=True)
class NominalGains:
    K_p: float = 2.0
    K_v: float = 2.5
    k_T: float = 10.0
    K_R: float = 40.0
    K_omega: float = 12.0
    k_psi: float = 4.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not value > 0:
                raise ConfigurationError(f"nominal gain {name} must be positive, got {value}")


def nominal_input(x, t, traj, gains, params, fallback_axis=E3):
    """Nominal ``(T_dot, M)`` and the desired body z-axis it steers toward.

    When the desired force is degenerate, ``fallback_axis`` is held as the
    desired axis and the axis feed-forward is dropped.
    """
    ref = traj(t)
    m, g = params.m, params.g
    e_p = x.p - ref.p
    e_v = x.v - ref.v
    v_dot = g * E3 + x.force / m

    f_d = m * (ref.a - g * E3 - gains.K_p * e_p - gains.K_v * e_v)
    f_d_dot = m * (ref.j - gains.K_p * e_v - gains.K_v * (v_dot - ref.a))
    T_d = float(np.linalg.norm(f_d))

    if T_d < settings.DEGENERATE_FORCE_EPS:
        logger.debug("Nominal: degenerate desired force at t=%.3f, holding axis", t)
        z_des = np.asarray(fallback_axis, dtype=float)
        z_des_dot = np.zeros(3)
        T_d_dot = 0.0
    else:
        n = f_d / T_d
        T_d_dot = float(n @ f_d_dot)
        z_des = -n
        z_des_dot = -(f_d_dot - n * T_d_dot) / T_d

    T_dot = -gains.k_T * (x.T - T_d) + T_d_dot

    # body rates that move z_B like z_des: R' z_des_dot = [w_y, -w_x, 0]
    b = x.R.T @ z_des_dot
    omega_ff = np.array([-b[1], b[0], ref.yaw_rate])

    attitude_error = np.cross(E3, x.R.T @ z_des)
    rate_gains = np.array([gains.K_omega, gains.K_omega, gains.k_psi])
    omega_dot_des = gains.K_R * attitude_error - rate_gains * (x.omega - omega_ff)
    M = np.cross(x.omega, params.J @ x.omega) + params.J @ omega_dot_des
    return WrenchRateInput(T_dot=T_dot, M=M), z_des


class NominalController:
    """Stateful wrapper that remembers the last valid desired axis."""

    def __init__(self, traj, gains, params):
        self.traj = traj
        self.gains = gains
        self.params = params
        self.axis = E3.copy()

    def __call__(self, x, t):
        nu, self.axis = nominal_input(
            x, t, self.traj, self.gains, self.params, fallback_axis=self.axis
        )
        return nu
