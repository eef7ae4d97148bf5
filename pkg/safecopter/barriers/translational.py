"""Velocity and position constraints built by safe backstepping.

Both are strict-feedback chains ending in the body rates:

* velocity: ``v -> f -> (omega_xy, T_dot) -> M``
* position: ``p -> v -> f -> (omega_xy, T_dot) -> M``

Each step ``i`` has a virtual controller ``k_i`` for the next state block and
the composite barrier subtracts ``|xi_i - k_{i-1}|**2 / (2 mu_i)`` from the base
ellipsoid barrier. Controllers are functions of the full augmented state, so
their time derivatives are directional derivatives along the dynamics and are
evaluated exactly with dual numbers, except ``k1_p`` whose derivative is linear
in ``p`` and ``v`` and written out. The functions below only use operations that
dual numbers support; they are differentiated through when a row is extracted.
"""

import numpy as np

from safecopter.barriers.base import (
    ROW_POSITION,
    ROW_VELOCITY,
    affine_row,
    check_thrust,
)
from safecopter.dual import jvp
from safecopter.dynamics import (
    A_XY,
    E3,
    WrenchRateInput,
    state_derivative,
)
from safecopter.utils import cross


def _sq(e):
    return e @ e


def solve_thrust_map(x, y):
    """Solve ``-T R A omega_xy - T_dot z_B = y`` for ``(omega_xy, T_dot)``.

    The map has determinant ``T**2`` in magnitude; callers check the thrust floor.
    """
    w = x.R.T @ y
    return -(A_XY.T @ w) / x.T, -w[2]


def _rate_drift(x, params):
    """Input-free angular acceleration of the x and y body rates."""
    return -(params.J_inv @ cross(x.omega, params.J @ x.omega))[:2]


def _rate_torque(x, rhs, params):
    """Minimum-norm torque giving ``d omega_xy / dt = rhs``."""
    return params.J_inv_xy_pinv @ (rhs - _rate_drift(x, params))


def _omega_gradient(x, omega_xy_des, mu):
    """``dh/d omega`` of a composite barrier ending in ``-|omega_xy - omega_xy_des|**2 / (2 mu)``.

    The desired rates do not depend on ``omega``.
    """
    return np.concatenate([-(x.omega_xy - omega_xy_des) / mu, [0.0]])


# velocity


def h0_v(x, cfg):
    return 1.0 - x.v @ (cfg.P_v @ x.v)


def k0_v(x, cfg, params):
    return -params.m * (params.g * E3 + 0.5 * cfg.c_v * x.v)


def k0_v_dot(x, cfg, params):
    """Time derivative of :func:`k0_v` along the dynamics."""
    return -0.5 * params.m * cfg.c_v * (params.g * E3 + x.force / params.m)


def k1_v(x, cfg, params):
    """Desired ``(omega_xy, T_dot)`` for the force step of the velocity chain."""
    check_thrust(x, cfg)
    mu1 = cfg.mu_v[0]
    lambda1 = cfg.lambda_v[0]
    rhs = (
        mu1 * (-(2.0 / params.m) * (cfg.P_v @ x.v))
        + k0_v_dot(x, cfg, params)
        - 0.5 * lambda1 * (x.force - k0_v(x, cfg, params))
    )
    return solve_thrust_map(x, rhs)


def h_v(x, cfg, params):
    mu1, mu2 = cfg.mu_v
    omega_xy_des, _ = k1_v(x, cfg, params)
    return (
        h0_v(x, cfg)
        - _sq(x.force - k0_v(x, cfg, params)) / (2.0 * mu1)
        - _sq(x.omega_xy - omega_xy_des) / (2.0 * mu2)
    )


def row_v(x, cfg, params):
    check_thrust(x, cfg)
    omega_xy_des, _ = k1_v(x, cfg, params)
    return affine_row(
        lambda s: h_v(s, cfg, params),
        x,
        params,
        cfg.a0_v,
        ROW_VELOCITY,
        omega_gradient=_omega_gradient(x, omega_xy_des, cfg.mu_v[1]),
    )


def k2_v(x, cfg, params):
    """Torque closing the velocity chain, with ``T_dot`` held at its desired value."""
    mu1, mu2 = cfg.mu_v
    lambda2 = cfg.lambda_v[1]
    omega_xy_des, T_dot_des = k1_v(x, cfg, params)
    nu = WrenchRateInput(T_dot=T_dot_des, M=np.zeros(3))
    omega_xy_des_dot = jvp(
        lambda s: k1_v(s, cfg, params)[0], x, state_derivative(x, nu, params)
    )
    e1 = x.force - k0_v(x, cfg, params)
    e2 = x.omega_xy - omega_xy_des
    # g1' e1 with g1 = -T R A
    coupling = -x.T * (A_XY.T @ (x.R.T @ e1))
    rhs = -(mu2 / mu1) * coupling + omega_xy_des_dot - 0.5 * lambda2 * e2
    return _rate_torque(x, rhs, params)


def backstepping_input_v(x, cfg, params):
    """Input certifying that the velocity row is feasible."""
    _, T_dot_des = k1_v(x, cfg, params)
    return WrenchRateInput(T_dot=T_dot_des, M=k2_v(x, cfg, params))


# position


def h0_p(x, cfg):
    e = x.p - cfg.p_d
    return 1.0 - e @ (cfg.P_p @ e)


def k0_p(x, cfg):
    return -0.5 * cfg.c_p * (x.p - cfg.p_d)


def k1_p(x, cfg, params):
    """Desired force for the velocity step of the position chain."""
    mu1 = cfg.mu_p[0]
    lambda1 = cfg.lambda_p[0]
    return params.m * (
        -params.g * E3
        + mu1 * (-2.0 * (cfg.P_p @ (x.p - cfg.p_d)))
        - 0.5 * cfg.c_p * x.v
        - 0.5 * lambda1 * (x.v - k0_p(x, cfg))
    )


def k1_p_dot(x, cfg, params):
    """Time derivative of :func:`k1_p`, which is linear in ``p`` and ``v``."""
    mu1 = cfg.mu_p[0]
    lambda1 = cfg.lambda_p[0]
    v_dot = params.g * E3 + x.force / params.m
    return params.m * (
        mu1 * (-2.0 * (cfg.P_p @ x.v))
        - 0.5 * cfg.c_p * v_dot
        - 0.5 * lambda1 * (v_dot + 0.5 * cfg.c_p * x.v)
    )


def k2_p(x, cfg, params):
    """Desired ``(omega_xy, T_dot)`` for the force step of the position chain."""
    check_thrust(x, cfg)
    mu1, mu2, _ = cfg.mu_p
    lambda2 = cfg.lambda_p[1]
    rhs = (
        -(mu2 / mu1) * (x.v - k0_p(x, cfg)) / params.m
        + k1_p_dot(x, cfg, params)
        - 0.5 * lambda2 * (x.force - k1_p(x, cfg, params))
    )
    return solve_thrust_map(x, rhs)


def h_p(x, cfg, params):
    mu1, mu2, mu3 = cfg.mu_p
    omega_xy_des, _ = k2_p(x, cfg, params)
    return (
        h0_p(x, cfg)
        - _sq(x.v - k0_p(x, cfg)) / (2.0 * mu1)
        - _sq(x.force - k1_p(x, cfg, params)) / (2.0 * mu2)
        - _sq(x.omega_xy - omega_xy_des) / (2.0 * mu3)
    )


def row_p(x, cfg, params):
    check_thrust(x, cfg)
    omega_xy_des, _ = k2_p(x, cfg, params)
    return affine_row(
        lambda s: h_p(s, cfg, params),
        x,
        params,
        cfg.a0_p,
        ROW_POSITION,
        omega_gradient=_omega_gradient(x, omega_xy_des, cfg.mu_p[2]),
    )


def k3_p(x, cfg, params):
    """Torque closing the position chain, with ``T_dot`` held at its desired value."""
    _, mu2, mu3 = cfg.mu_p
    lambda3 = cfg.lambda_p[2]
    omega_xy_des, T_dot_des = k2_p(x, cfg, params)
    nu = WrenchRateInput(T_dot=T_dot_des, M=np.zeros(3))
    omega_xy_des_dot = jvp(
        lambda s: k2_p(s, cfg, params)[0], x, state_derivative(x, nu, params)
    )
    e2 = x.force - k1_p(x, cfg, params)
    e3 = x.omega_xy - omega_xy_des
    coupling = -x.T * (A_XY.T @ (x.R.T @ e2))
    rhs = -(mu3 / mu2) * coupling + omega_xy_des_dot - 0.5 * lambda3 * e3
    return _rate_torque(x, rhs, params)


def backstepping_input_p(x, cfg, params):
    """Input certifying that the position row is feasible."""
    _, T_dot_des = k2_p(x, cfg, params)
    return WrenchRateInput(T_dot=T_dot_des, M=k3_p(x, cfg, params))
