"""Multicopter rigid-body dynamics on the thrust-augmented state.

Frame conventions: the inertial frame is NED (e3 points down), ``R`` maps body
coordinates to inertial ones, ``z_B = R e3`` is the body z-axis expressed in the
inertial frame and the collective thrust force is ``f = -T z_B``.

Everything that feeds a barrier function is written with ``+ - * @`` and
indexing only, so the same code runs on plain arrays and on dual numbers.
"""

import logging
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np
from scipy import linalg

from safecopter.exceptions import ConfigurationError
from safecopter.utils import cross, euler_to_rotation, skew

logger = logging.getLogger(__name__)

E3 = np.array([0.0, 0.0, 1.0])

# omega x e3 = A_XY @ omega[:2]
A_XY = np.array([[0.0, 1.0], [-1.0, 0.0], [0.0, 0.0]])

STATE_SIZE = 19


@dataclass(frozen=True)
class AugmentedState:
    """Position, velocity, attitude, body rates and total thrust."""

    p: np.ndarray
    v: np.ndarray
    R: np.ndarray
    omega: np.ndarray
    T: float

    @property
    def z_B(self):
        return self.R @ E3

    @property
    def force(self):
        return -self.T * self.z_B

    @property
    def omega_xy(self):
        return self.omega[:2]

    def to_vector(self):
        return np.concatenate(
            [self.p, self.v, np.reshape(self.R, 9), self.omega, [self.T]]
        )

    @classmethod
    def from_vector(cls, vector):
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (STATE_SIZE,):
            raise ValueError(f"expected a {STATE_SIZE}-vector, got shape {vector.shape}")
        return cls(
            p=vector[0:3].copy(),
            v=vector[3:6].copy(),
            R=vector[6:15].reshape(3, 3).copy(),
            omega=vector[15:18].copy(),
            T=float(vector[18]),
        )

    @classmethod
    def from_euler(cls, p, v, roll, pitch, yaw, omega, T):
        """Build a state from ZYX Euler angles given in radians."""
        return cls(
            p=np.asarray(p, dtype=float),
            v=np.asarray(v, dtype=float),
            R=euler_to_rotation(roll, pitch, yaw),
            omega=np.asarray(omega, dtype=float),
            T=float(T),
        )

    @classmethod
    def hover(cls, params, p=(0.0, 0.0, 0.0), yaw=0.0):
        return cls.from_euler(
            p, np.zeros(3), 0.0, 0.0, yaw, np.zeros(3), params.m * params.g
        )


@dataclass(frozen=True)
class AugmentedStateRate:
    """Time derivative of an :class:`AugmentedState`.

    Fields left as ``None`` are zero; this is also the tangent type used for
    directional derivatives of functions of the state.
    """

    p: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    R: Optional[np.ndarray] = None
    omega: Optional[np.ndarray] = None
    T: Optional[float] = None

    def to_vector(self):
        zeros = {"p": 3, "v": 3, "R": 9, "omega": 3, "T": 1}
        parts = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                parts.append(np.zeros(zeros[f.name]))
            else:
                parts.append(np.reshape(value, zeros[f.name]))
        return np.concatenate(parts)


@dataclass(frozen=True)
class WrenchRateInput:
    """Decision variable of the safety filter: thrust rate and body torque."""

    T_dot: float
    M: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "T_dot", float(self.T_dot))
        object.__setattr__(self, "M", np.asarray(self.M, dtype=float).reshape(3))

    def as_array(self):
        return np.concatenate([[self.T_dot], self.M])

    @classmethod
    def from_array(cls, values):
        values = np.asarray(values, dtype=float)
        return cls(T_dot=values[0], M=values[1:4])

    @classmethod
    def zero(cls):
        return cls(T_dot=0.0, M=np.zeros(3))


def effectiveness_matrix(
    arm_length, torque_coefficient, rotor_count=6, first_rotor_angle=np.pi / 6
):
    """Control-effectiveness matrix of a flat multirotor with equally spaced arms.

    Rotor ``k`` sits at angle ``first_rotor_angle + 2 pi k / rotor_count`` from the
    body x-axis and spins in the direction ``(-1)**k``. Rows are total thrust,
    roll torque, pitch torque and yaw torque per unit rotor thrust.
    """
    if rotor_count < 4:
        raise ConfigurationError(f"a multirotor needs at least 4 rotors, got {rotor_count}")
    angles = first_rotor_angle + 2.0 * np.pi * np.arange(rotor_count) / rotor_count
    spin = (-1.0) ** np.arange(rotor_count)
    return np.vstack(
        [
            np.ones(rotor_count),
            -arm_length * np.sin(angles),
            arm_length * np.cos(angles),
            spin * torque_coefficient,
        ]
    )


@dataclass(frozen=True)
class VehicleParams:
    m: float
    J: np.ndarray
    g: float
    B: np.ndarray
    u_max: float
    J_inv: np.ndarray = field(init=False, repr=False, compare=False)
    B_pinv: np.ndarray = field(init=False, repr=False, compare=False)
    # minimum-norm torque producing a requested (omega_x, omega_y) acceleration
    J_inv_xy_pinv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        J = np.asarray(self.J, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if not self.m > 0:
            raise ConfigurationError(f"mass must be positive, got {self.m}")
        if not self.g > 0:
            raise ConfigurationError(f"gravity must be positive, got {self.g}")
        if not self.u_max > 0:
            raise ConfigurationError(f"rotor thrust bound must be positive, got {self.u_max}")
        if J.shape != (3, 3) or not np.allclose(J, J.T):
            raise ConfigurationError("inertia matrix must be a symmetric 3x3 matrix")
        if np.min(np.linalg.eigvalsh(J)) <= 0:
            raise ConfigurationError("inertia matrix must be positive definite")
        if B.ndim != 2 or B.shape[0] != 4 or np.linalg.matrix_rank(B) < 4:
            raise ConfigurationError(
                f"effectiveness matrix must be 4 x n with full row rank, got shape {B.shape}"
            )
        J_inv = np.linalg.inv(J)
        object.__setattr__(self, "m", float(self.m))
        object.__setattr__(self, "g", float(self.g))
        object.__setattr__(self, "u_max", float(self.u_max))
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "J_inv", J_inv)
        object.__setattr__(self, "B_pinv", linalg.pinv(B))
        object.__setattr__(self, "J_inv_xy_pinv", linalg.pinv(J_inv[:2]))

    @property
    def rotor_count(self):
        return self.B.shape[1]

    @property
    def hover_thrust(self):
        return self.m * self.g

    @classmethod
    def hexacopter_x(
        cls,
        m=4.34,
        J=(0.0820, 0.0845, 0.1377),
        g=9.81,
        arm_length=0.315,
        torque_coefficient=8.004e-4,
        u_max_ratio=0.6371,
    ):
        """Hexacopter in X configuration; ``u_max`` is ``u_max_ratio * m * g``."""
        J = np.asarray(J, dtype=float)
        if J.ndim == 1:
            J = np.diag(J)
        return cls(
            m=m,
            J=J,
            g=g,
            B=effectiveness_matrix(arm_length, torque_coefficient),
            u_max=u_max_ratio * m * g,
        )


def state_derivative(x, nu, params, thrust_offset=0.0):
    """Augmented dynamics; affine in ``nu`` for a fixed state.

    ``thrust_offset`` is added to the collective thrust acting on ``v`` only, for
    steps where the rotors deliver a different thrust than the thrust state ``T``.
    """
    J, J_inv = params.J, params.J_inv
    return AugmentedStateRate(
        p=x.v,
        v=params.g * E3 - (x.T + thrust_offset) * x.z_B / params.m,
        R=x.R @ skew(x.omega),
        omega=J_inv @ (nu.M - cross(x.omega, J @ x.omega)),
        T=nu.T_dot,
    )


def drift(x, params):
    """Input-free part of :func:`state_derivative`."""
    return state_derivative(x, WrenchRateInput.zero(), params)


def input_directions(params):
    """Derivative of the state rate along each input, ordered [T_dot, Mx, My, Mz]."""
    directions = [AugmentedStateRate(T=1.0)]
    for i in range(3):
        directions.append(AugmentedStateRate(omega=params.J_inv[:, i]))
    return directions


def reformulated_force_rate(x, nu):
    """Time derivative of ``f = -T z_B``: ``-T R A omega_xy - T_dot z_B``."""
    return -x.T * (x.R @ (A_XY @ x.omega_xy)) - nu.T_dot * x.z_B


def allocate(wrench, params):
    """Minimum-norm rotor thrusts for a total wrench ``[T, Mx, My, Mz]``."""
    return params.B_pinv @ np.asarray(wrench, dtype=float)


def saturate(u, params):
    """Clamp rotor thrusts to ``[0, u_max]``.

    Returns the clamped thrusts, the wrench they actually produce and whether any
    rotor was clamped.
    """
    u = np.asarray(u, dtype=float)
    u_sat = np.clip(u, 0.0, params.u_max)
    saturated = bool(np.any(u_sat != u))
    return u_sat, params.B @ u_sat, saturated
