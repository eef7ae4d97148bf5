"""Minimum-deviation safety filter.

``solve_qp`` finds the exact minimiser of ``0.5 |nu - target|**2`` subject to
``c_i @ nu + d_i >= 0`` by enumerating candidate active sets. The problems are
tiny (four variables, a handful of rows), so enumeration is exact and
deterministic.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from safecopter import settings
from safecopter.barriers import barrier_snapshot, safety_rows
from safecopter.dynamics import WrenchRateInput
from safecopter.exceptions import ConfigurationError

logger = logging.getLogger(__name__)

# active-set systems above this condition number are skipped
_MAX_CONDITION = 1e12


@dataclass(frozen=True)
class QpProblem:
    target: np.ndarray
    rows: List = field(default_factory=list)

    def __post_init__(self):
        target = np.asarray(self.target, dtype=float).reshape(-1)
        if not np.all(np.isfinite(target)):
            raise ValueError("QP target must be finite")
        for row in self.rows:
            if not (np.all(np.isfinite(row.c)) and np.isfinite(row.d)):
                raise ValueError(f"constraint row {row.label!r} is not finite")
            if np.shape(row.c) != target.shape:
                raise ValueError(
                    f"constraint row {row.label!r} has {np.size(row.c)} coefficients "
                    f"for {target.size} variables"
                )
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "rows", list(self.rows))

    @property
    def C(self):
        if not self.rows:
            return np.zeros((0, self.target.size))
        return np.array([row.c for row in self.rows], dtype=float)

    @property
    def d(self):
        return np.array([row.d for row in self.rows], dtype=float)


@dataclass(frozen=True)
class QpSolution:
    OPTIMAL = "optimal"
    RELAXED = "relaxed"
    INFEASIBLE = "infeasible"

    nu_a_star: np.ndarray
    active_set: tuple
    status: str
    slack_used: float
    kkt_residual: float
    multipliers: np.ndarray


def kkt_residual(C, d, target, nu, multipliers):
    """Largest violation of the KKT conditions at ``(nu, multipliers)``."""
    if C.shape[0] == 0:
        return float(np.linalg.norm(nu - target))
    slack = C @ nu + d
    return float(
        max(
            np.linalg.norm(nu - target - C.T @ multipliers),
            max(0.0, -np.min(multipliers)),
            max(0.0, -np.min(slack)),
            np.max(np.abs(multipliers * slack)),
        )
    )


def _enumerate(C, d, target, tol):
    """First KKT point over the candidate active sets, or ``None``.

    Sets are visited by size and then lexicographically. The objective is strictly
    convex, so any KKT point is the unique minimiser and the search stops there.
    """
    m, n = C.shape
    for size in range(min(m, n) + 1):
        for active in itertools.combinations(range(m), size):
            multipliers = np.zeros(m)
            if active:
                C_S = C[list(active)]
                gram = C_S @ C_S.T
                with np.errstate(divide="ignore", invalid="ignore"):
                    condition = np.linalg.cond(gram)
                if not condition <= _MAX_CONDITION:
                    continue
                try:
                    lam = -np.linalg.solve(gram, C_S @ target + d[list(active)])
                except np.linalg.LinAlgError:
                    continue
                if np.any(lam < -tol):
                    continue
                multipliers[list(active)] = lam
                nu = target + C_S.T @ lam
            else:
                nu = target.copy()
            if m and np.min(C @ nu + d) < -tol:
                continue
            objective = 0.5 * float((nu - target) @ (nu - target))
            return objective, nu, active, multipliers
    return None


def solve_qp(problem, tol=None, slack_weight=None):
    tol = settings.QP_TOLERANCE if tol is None else tol
    slack_weight = settings.QP_SLACK_WEIGHT if slack_weight is None else slack_weight
    if len(problem.rows) > settings.QP_MAX_ROWS:
        raise ConfigurationError(
            f"QP has {len(problem.rows)} rows, at most {settings.QP_MAX_ROWS} are supported"
        )

    C, d, target = problem.C, problem.d, problem.target
    best = _enumerate(C, d, target, tol)
    if best is not None:
        _, nu, active, multipliers = best
        return QpSolution(
            nu_a_star=nu,
            active_set=tuple(active),
            status=QpSolution.OPTIMAL,
            slack_used=0.0,
            kkt_residual=kkt_residual(C, d, target, nu, multipliers),
            multipliers=multipliers,
        )

    # Shared slack s >= 0 on every row, penalised by slack_weight * s**2 / 2.
    # With s = s_scaled / sqrt(w) the objective stays a plain distance in (nu, s_scaled).
    m, n = C.shape
    scale = 1.0 / np.sqrt(slack_weight)
    C_relaxed = np.zeros((m + 1, n + 1))
    C_relaxed[:m, :n] = C
    C_relaxed[:m, n] = scale
    C_relaxed[m, n] = 1.0
    d_relaxed = np.append(d, 0.0)
    target_relaxed = np.append(target, 0.0)
    best = _enumerate(C_relaxed, d_relaxed, target_relaxed, tol)
    if best is None:
        logger.error("QP: no KKT point found even with slack, keeping the target input")
        return QpSolution(
            nu_a_star=target.copy(),
            active_set=(),
            status=QpSolution.INFEASIBLE,
            slack_used=float("nan"),
            kkt_residual=float("nan"),
            multipliers=np.zeros(m),
        )

    _, z, active, multipliers = best
    nu = z[:n]
    slack = float(z[n] * scale)
    return QpSolution(
        nu_a_star=nu,
        active_set=tuple(i for i in active if i < m),
        status=QpSolution.RELAXED,
        slack_used=slack,
        kkt_residual=kkt_residual(
            C_relaxed, d_relaxed, target_relaxed, z, multipliers
        ),
        multipliers=multipliers[:m],
    )


def filter_input(x, k_d, cfg, params):
    """Closest input to ``k_d`` satisfying all four safety constraints.

    Returns the filtered input, the QP solution and the barrier values at ``x``.
    """
    rows = safety_rows(x, cfg, params)
    solution = solve_qp(QpProblem(target=k_d.as_array(), rows=rows))
    if solution.status != QpSolution.OPTIMAL:
        logger.warning(
            "QP: constraints jointly infeasible, status %s with slack %.3g",
            solution.status,
            solution.slack_used,
        )
    snapshot = barrier_snapshot(x, cfg, params, rows=rows)
    return WrenchRateInput.from_array(solution.nu_a_star), solution, snapshot
