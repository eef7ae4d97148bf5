from importlib import import_module

import numpy as np
from scipy import linalg
from scipy.spatial.transform import Rotation

from safecopter import settings

# generators of so(3): skew(w) = w[0] * K0 + w[1] * K1 + w[2] * K2
_K0 = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
_K1 = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
_K2 = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])


def skew(w):
    """Hat map. Works for plain arrays and for dual-number vectors."""
    return w[0] * _K0 + w[1] * _K1 + w[2] * _K2


def cross(a, b):
    return skew(a) @ b


def euler_to_rotation(roll, pitch, yaw):
    """Body-to-inertial rotation from ZYX (yaw, pitch, roll) angles in radians."""
    return Rotation.from_euler("ZYX", [yaw, pitch, roll]).as_matrix()


def rotation_to_euler(R):
    """Inverse of :func:`euler_to_rotation`; returns ``(roll, pitch, yaw)``."""
    yaw, pitch, roll = Rotation.from_matrix(R).as_euler("ZYX")
    return roll, pitch, yaw


def orthonormalize(R):
    """Nearest rotation matrix in the Frobenius norm (polar factor)."""
    u, _ = linalg.polar(R)
    return u


def orthonormality_error(R):
    return float(np.linalg.norm(R.T @ R - np.eye(3)))


def import_string(dotted_path):
    """Import a dotted module path and return the attribute it names."""
    try:
        module_path, class_name = dotted_path.rsplit(".", 1)
    except ValueError as err:
        raise ImportError(f"{dotted_path} doesn't look like a module path") from err

    module = import_module(module_path)
    try:
        return getattr(module, class_name)
    except AttributeError as err:
        raise ImportError(
            f'Module "{module_path}" does not define a "{class_name}" attribute/class'
        ) from err


def should_propagate_exceptions():
    """Whether crashing check suites should abort instead of being reported."""
    return settings.PROPAGATE_EXCEPTIONS
