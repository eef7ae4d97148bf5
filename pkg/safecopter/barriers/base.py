from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from safecopter.dual import jvp, primal, value_and_jvp
from safecopter.dynamics import drift, input_directions
from safecopter.exceptions import ConfigurationError, SingularThrust

ROW_OMEGA = "omega"
ROW_THRUST_AXIS = "z_B"
ROW_VELOCITY = "v"
ROW_POSITION = "p"


def _diagonal(limit):
    """``diag(1 / limit**2)`` from a scalar or per-axis limit."""
    limit = np.broadcast_to(np.asarray(limit, dtype=float), (3,))
    if np.any(limit <= 0):
        raise ConfigurationError(f"limits must be positive, got {limit}")
    return np.diag(1.0 / limit**2)


@dataclass(frozen=True)
class SafetyConfig:
    """Parameters of the four safety constraints.

    ``mu_v``/``lambda_v`` hold the weights and damping gains of the velocity
    chain's two backstepping steps, ``mu_p``/``lambda_p`` those of the position
    chain's three steps. The last damping gain of each chain is only used by the
    witness controllers.
    """

    P_omega: np.ndarray
    P_v: np.ndarray
    P_p: np.ndarray
    p_d: np.ndarray
    z_B_d: np.ndarray
    theta_bar: float
    a_omega: float = 1.0
    a1_zB: float = 1.0
    a2_zB: float = 1.0
    a0_v: float = 1.0
    a0_p: float = 1.0
    mu_v: tuple = (1.0, 1.0)
    mu_p: tuple = (1.0, 1.0, 1.0)
    lambda_v: tuple = (1.0, 1.0)
    lambda_p: tuple = (1.0, 1.0, 1.0)
    c_v: float = 1.0
    c_p: float = 1.0
    T_min: float = 0.0

    def __post_init__(self):
        for name in ("P_omega", "P_v", "P_p"):
            P = np.asarray(getattr(self, name), dtype=float)
            if P.shape != (3, 3) or not np.allclose(P, P.T):
                raise ConfigurationError(f"{name} must be a symmetric 3x3 matrix")
            if np.min(np.linalg.eigvalsh(P)) < 0:
                raise ConfigurationError(f"{name} must be positive semidefinite")
            object.__setattr__(self, name, P)

        object.__setattr__(self, "p_d", np.asarray(self.p_d, dtype=float).reshape(3))
        z_B_d = np.asarray(self.z_B_d, dtype=float).reshape(3)
        if abs(np.linalg.norm(z_B_d) - 1.0) > 1e-9:
            raise ConfigurationError(f"z_B_d must be a unit vector, got {z_B_d}")
        object.__setattr__(self, "z_B_d", z_B_d)

        if not 0.0 < self.theta_bar < np.pi:
            raise ConfigurationError(f"theta_bar must lie in (0, pi), got {self.theta_bar}")

        for name, size in (("mu_v", 2), ("mu_p", 3), ("lambda_v", 2), ("lambda_p", 3)):
            values = tuple(float(item) for item in getattr(self, name))
            if len(values) != size:
                raise ConfigurationError(f"{name} needs {size} entries, got {len(values)}")
            if min(values) <= 0:
                raise ConfigurationError(f"{name} entries must be positive, got {values}")
            object.__setattr__(self, name, values)

        for name in ("a_omega", "a1_zB", "a2_zB", "a0_v", "a0_p", "c_v", "c_p"):
            value = float(getattr(self, name))
            if value <= 0:
                raise ConfigurationError(f"{name} must be positive, got {value}")
            object.__setattr__(self, name, value)

        if self.c_v < self.a0_v:
            raise ConfigurationError(f"c_v={self.c_v} must not be smaller than a0_v={self.a0_v}")
        if self.c_p < self.a0_p:
            raise ConfigurationError(f"c_p={self.c_p} must not be smaller than a0_p={self.a0_p}")
        if self.T_min < 0:
            raise ConfigurationError(f"T_min must be non-negative, got {self.T_min}")

    @classmethod
    def from_limits(cls, omega_max, v_max, p_max, **kwargs):
        """Ellipsoidal safe sets from scalar or per-axis bounds."""
        return cls(
            P_omega=_diagonal(omega_max),
            P_v=_diagonal(v_max),
            P_p=_diagonal(p_max),
            **kwargs,
        )


@dataclass(frozen=True)
class AffineConstraintRow:
    """``c @ [T_dot, Mx, My, Mz] + d >= 0``.

    ``h`` is the barrier value the row was built from.
    """

    c: np.ndarray
    d: float
    label: str
    h: Optional[float] = None

    def value(self, nu):
        nu = nu.as_array() if hasattr(nu, "as_array") else np.asarray(nu, dtype=float)
        return float(self.c @ nu + self.d)


@dataclass(frozen=True)
class BarrierSnapshot:
    h_omega: float
    h0_zB: float
    h1_zB: float
    h0_v: float
    h_v: float
    h0_p: float
    h_p: float

    # barriers whose sign is the safety criterion reported per run
    FAMILIES = ("h_omega", "h0_zB", "h0_v", "h0_p")

    @classmethod
    def names(cls):
        return tuple(f.name for f in fields(cls))

    def as_dict(self):
        return asdict(self)


def check_thrust(x, cfg):
    thrust = float(primal(x.T))
    if abs(thrust) < cfg.T_min:
        raise SingularThrust(thrust, cfg.T_min)


def affine_row(barrier, x, params, slope, label, omega_gradient=None):
    """Row of ``dh/dt + slope * h >= 0`` for a barrier of the augmented state.

    The state rate is affine in the input, so the derivative of ``barrier`` along
    the drift gives the offset and its derivatives along the four input
    directions give the coefficients; both are exact.

    The torques only move ``omega``. When the caller knows ``dh/d omega`` in closed
    form, pass it as ``omega_gradient`` and the torque coefficients are
    ``J^-T dh/d omega``, leaving one pass for the drift and one for ``T_dot``.
    """
    h, h_dot_drift = value_and_jvp(barrier, x, drift(x, params))
    directions = input_directions(params)
    if omega_gradient is None:
        c = np.array([float(jvp(barrier, x, direction)) for direction in directions])
    else:
        c_T = float(jvp(barrier, x, directions[0]))
        c = np.concatenate([[c_T], params.J_inv.T @ omega_gradient])
    h = float(h)
    return AffineConstraintRow(c=c, d=float(h_dot_drift) + slope * h, label=label, h=h)
