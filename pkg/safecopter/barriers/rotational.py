"""Angular-velocity and thrust-direction constraints.

Both depend on the torque only, so their rows are written in closed form and
have a zero thrust-rate coefficient.
"""

import numpy as np

from safecopter.barriers.base import ROW_OMEGA, ROW_THRUST_AXIS, AffineConstraintRow
from safecopter.dynamics import A_XY
from safecopter.utils import cross, skew

# omega_xy = _S @ omega
_S = np.eye(3)[:2]


def h_omega(x, cfg):
    """``1 - omega' P_omega omega``; non-negative inside the body-rate ellipsoid."""
    return 1.0 - x.omega @ (cfg.P_omega @ x.omega)


def row_omega(x, cfg, params):
    omega = x.omega
    gyro = params.J_inv @ cross(omega, params.J @ omega)
    P_omega = cfg.P_omega @ omega
    c_M = -2.0 * params.J_inv.T @ P_omega
    h = float(h_omega(x, cfg))
    d = 2.0 * P_omega @ gyro + cfg.a_omega * h
    return AffineConstraintRow(
        c=np.concatenate([[0.0], c_M]), d=float(d), label=ROW_OMEGA, h=h
    )


def h0_zB(x, cfg):
    return x.z_B @ cfg.z_B_d - np.cos(cfg.theta_bar)


def h1_zB(x, cfg):
    # d/dt z_B = R A omega_xy
    h0_dot = cfg.z_B_d @ (x.R @ (A_XY @ x.omega_xy))
    return h0_dot + cfg.a1_zB * h0_zB(x, cfg)


def row_zB(x, cfg, params):
    R, omega, z_d = x.R, x.omega, cfg.z_B_d
    gyro = params.J_inv @ cross(omega, params.J @ omega)
    # z_d' R A, the sensitivity of h0_dot to omega_xy
    lever = z_d @ R @ A_XY
    h0_dot = lever @ x.omega_xy
    h0 = float(h0_zB(x, cfg))
    h1 = float(h1_zB(x, cfg))

    c_M = params.J_inv.T @ (_S.T @ lever)
    d = (
        z_d @ (R @ skew(omega) @ (A_XY @ x.omega_xy))
        - lever @ (_S @ gyro)
        + cfg.a1_zB * h0_dot
        + cfg.a2_zB * h1
    )
    return AffineConstraintRow(
        c=np.concatenate([[0.0], c_M]), d=float(d), label=ROW_THRUST_AXIS, h=h1
    )
