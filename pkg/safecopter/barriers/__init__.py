import numpy as np

from safecopter.barriers import rotational, translational
from safecopter.barriers.base import (
    AffineConstraintRow,
    BarrierSnapshot,
    SafetyConfig,
    check_thrust,
)
from safecopter.exceptions import SingularThrust

__all__ = [
    "AffineConstraintRow",
    "BarrierSnapshot",
    "SafetyConfig",
    "barrier_snapshot",
    "check_thrust",
    "safety_rows",
]


def safety_rows(x, cfg, params):
    """The four constraint rows, ordered angular velocity, thrust axis, velocity, position."""
    check_thrust(x, cfg)
    return [
        rotational.row_omega(x, cfg, params),
        rotational.row_zB(x, cfg, params),
        translational.row_v(x, cfg, params),
        translational.row_p(x, cfg, params),
    ]


def barrier_snapshot(x, cfg, params, rows=None):
    """Every barrier value at ``x``.

    Values already carried by ``rows`` are reused. Without rows, the composite
    barriers are NaN when the thrust is below the singularity floor.
    """
    if rows is not None:
        h_omega, h1_zB, h_v, h_p = (row.h for row in rows)
    else:
        h_omega = float(rotational.h_omega(x, cfg))
        h1_zB = float(rotational.h1_zB(x, cfg))
        try:
            h_v = float(translational.h_v(x, cfg, params))
            h_p = float(translational.h_p(x, cfg, params))
        except SingularThrust:
            h_v = h_p = np.nan
    return BarrierSnapshot(
        h_omega=h_omega,
        h0_zB=float(rotational.h0_zB(x, cfg)),
        h1_zB=h1_zB,
        h0_v=float(translational.h0_v(x, cfg)),
        h_v=h_v,
        h0_p=float(translational.h0_p(x, cfg)),
        h_p=h_p,
    )
