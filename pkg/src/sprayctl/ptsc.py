"""Constrained prioritized task-space control.

Levels are least-squares objectives ``|b - J x|^2`` solved in strict order.
After level ``k`` is solved, its minimizer set is pinned by the equality
``J_k x = J_k x_k*``: the optimal image ``J_k x`` of a least-squares objective
over a convex set is unique, so this is exactly ``E_k(x) = h_k`` without
quadratic constraints.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple, Sequence

import numpy as np

from .errors import DimensionError, InfeasibleError
from .kinematics import JointState, KinematicChain
from .qp import QpProblem, QpSolution, QpStatus, solve_qp
from .tasks import Gains, joint_velocity_command

REG_EPS = 1e-9
RELAX_TOL = 1e-10

QpHook = Callable[[QpProblem, QpSolution, str], None]


@dataclass
class PriorityLevel:
    """``|b - J x|^2`` plus an optional ``w |b2 - J2 x|^2`` blended into the same level."""

    J: np.ndarray
    b: np.ndarray
    blend: tuple[np.ndarray, np.ndarray, float] | None = None
    name: str = ""

    def __post_init__(self) -> None:
        self.J = np.atleast_2d(np.asarray(self.J, dtype=float))
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.J.shape[0] != self.b.shape[0]:
            raise DimensionError(f"level {self.name!r}: J has {self.J.shape[0]} rows, b has {self.b.shape[0]}")
        if self.blend is not None:
            J2, b2, w = self.blend
            J2 = np.atleast_2d(np.asarray(J2, dtype=float))
            b2 = np.asarray(b2, dtype=float).reshape(-1)
            if J2.shape[0] != b2.shape[0] or J2.shape[1] != self.J.shape[1]:
                raise DimensionError(f"level {self.name!r}: blend term does not match")
            if not w > 0:
                raise ValueError("blend weight must be positive")
            self.blend = (J2, b2, float(w))

    @property
    def n(self) -> int:
        return self.J.shape[1]

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """Rows whose image is fixed by this level's optimum (weights folded in)."""
        if self.blend is None:
            return self.J, self.b
        J2, b2, w = self.blend
        s = np.sqrt(w)
        return np.vstack([self.J, s * J2]), np.concatenate([self.b, s * b2])

    def residual(self, x: np.ndarray) -> float:
        J, b = self.stacked()
        return float(np.linalg.norm(b - J @ x))


@dataclass
class PrioritizedProblem:
    levels: list[PriorityLevel]
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    info: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.levels:
            raise ValueError("a prioritized problem needs at least one level")
        n = self.levels[0].n
        for lvl in self.levels:
            if lvl.n != n:
                raise DimensionError("all levels must share the decision dimension")
        # validate and normalize the shared constraint set once
        shared = QpProblem(np.zeros((n, n)), np.zeros(n), self.A_eq, self.b_eq, self.A_in, self.b_in, self.lb, self.ub)
        self.A_eq, self.b_eq = shared.A_eq, shared.b_eq
        self.A_in, self.b_in = shared.A_in, shared.b_in
        self.lb, self.ub = shared.lb, shared.ub

    @property
    def n(self) -> int:
        return self.levels[0].n

    def violation(self, x: np.ndarray) -> float:
        probe = QpProblem(np.zeros((self.n, self.n)), np.zeros(self.n), self.A_eq, self.b_eq,
                          self.A_in, self.b_in, self.lb, self.ub)
        return probe.violation(x)


@dataclass
class CascadeSolution:
    x: np.ndarray
    level_residuals: list[float]
    statuses: list[QpStatus]  # one per attempted level; a failure ends the list
    solved_levels: int
    n_levels: int

    @property
    def ok(self) -> bool:
        return self.solved_levels == self.n_levels


def _level_qp(level: PriorityLevel, problem: PrioritizedProblem, eq_rows: list[np.ndarray],
              eq_rhs: list[np.ndarray], eps: float, relax: float) -> QpProblem:
    J, b = level.stacked()
    H = J.T @ J
    scale = float(np.mean(np.diag(H)))
    H = H + eps * (scale if scale > 0 else 1.0) * np.eye(problem.n)
    f = -J.T @ b
    A_eq = np.vstack([problem.A_eq, *eq_rows])
    b_eq = np.concatenate([problem.b_eq, *eq_rhs])
    b_in, lb, ub = problem.b_in, problem.lb, problem.ub
    if relax > 0:
        with np.errstate(invalid="ignore"):
            b_in = b_in - relax * (1.0 + np.abs(b_in))
            lb = np.where(np.isfinite(lb), lb - relax * (1.0 + np.abs(lb)), lb)
            ub = np.where(np.isfinite(ub), ub + relax * (1.0 + np.abs(ub)), ub)
    return QpProblem(H=H, f=f, A_eq=A_eq, b_eq=b_eq, A_in=problem.A_in, b_in=b_in, lb=lb, ub=ub)


def solve_ptsc(problem: PrioritizedProblem, eps: float = REG_EPS, on_qp: QpHook | None = None) -> CascadeSolution:
    """Solve the levels of ``problem`` lexicographically.

    Raises :class:`InfeasibleError` when the shared constraints admit no
    point. A failure at a lower level keeps the previous level's solution
    and records the failing status.
    """
    nlev = len(problem.levels)
    statuses: list[QpStatus] = []
    eq_rows: list[np.ndarray] = []
    eq_rhs: list[np.ndarray] = []
    x = None
    for i, level in enumerate(problem.levels):
        qp = _level_qp(level, problem, eq_rows, eq_rhs, eps, relax=0.0)
        sol = solve_qp(qp)
        if on_qp is not None:
            on_qp(qp, sol, f"level{i + 1}")
        if not sol.ok and i > 0:
            # the pinned minimizer set can touch the polytope in a single point;
            # give the inequalities a hair of slack before giving up
            qp = _level_qp(level, problem, eq_rows, eq_rhs, eps, relax=RELAX_TOL)
            sol = solve_qp(qp)
            if on_qp is not None:
                on_qp(qp, sol, f"level{i + 1}-relaxed")
        statuses.append(sol.status)
        if not sol.ok:
            if i == 0:
                raise InfeasibleError(f"shared constraints are infeasible ({sol.status.value})")
            break
        x = sol.x
        J, _ = level.stacked()
        eq_rows.append(J)
        eq_rhs.append(J @ x)
    solved = sum(1 for s in statuses if s is QpStatus.OPTIMAL)
    residuals = [lvl.residual(x) for lvl in problem.levels]
    return CascadeSolution(x=x, level_residuals=residuals, statuses=statuses, solved_levels=solved, n_levels=nlev)


# --- constraint builders -------------------------------------------------------


class VelocityBounds(NamedTuple):
    lb: np.ndarray
    ub: np.ndarray
    collapsed: np.ndarray  # bool per joint


def build_velocity_constraints(limits: KinematicChain | Sequence[Any], qd_prev: Sequence[float], dt: float) -> VelocityBounds:
    """Joint velocity box from the velocity limits intersected with one step of acceleration.

    ``limits`` is a chain or a sequence of :class:`~sprayctl.kinematics.JointLimits`.
    Where the two windows do not overlap, both bounds collapse to the nearest
    velocity limit and the joint is flagged.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if isinstance(limits, KinematicChain):
        vlo, vhi = limits.limit_arrays("vel")
        alo, ahi = limits.limit_arrays("acc")
    else:
        vlo = np.array([lim.vel[0] for lim in limits])
        vhi = np.array([lim.vel[1] for lim in limits])
        alo = np.array([lim.acc[0] for lim in limits])
        ahi = np.array([lim.acc[1] for lim in limits])
    qd_prev = np.asarray(qd_prev, dtype=float)
    if qd_prev.shape != vlo.shape:
        raise DimensionError(f"qd_prev has {qd_prev.shape[0]} entries, expected {vlo.shape[0]}")
    win_lo = qd_prev + alo * dt
    win_hi = qd_prev + ahi * dt
    lb = np.maximum(vlo, win_lo)
    ub = np.minimum(vhi, win_hi)
    collapsed = lb > ub
    above = collapsed & (win_lo > vhi)
    below = collapsed & ~above
    lb[above] = ub[above] = vhi[above]
    lb[below] = ub[below] = vlo[below]
    return VelocityBounds(lb, ub, collapsed)


def build_height_constraint(chain: KinematicChain, q: Sequence[float], frame: str, z_min: float, dt: float,
                            horizon: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Linearized lower bound on the height of ``frame`` as one ``A_in x >= b_in`` row.

    With ``horizon=None`` the row is the one-step prediction
    ``dt * J_z qd >= z_min - z``. A longer horizon makes the approach to the
    boundary gradual: the frame may close at most the fraction
    ``dt / horizon`` of its clearance per step.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    T = dt if horizon is None else max(float(horizon), dt)
    _, p, J = chain.frame_kinematics(q, frame)
    return (T * J[2:3]).copy(), np.array([z_min - p[2]])


def joint_position_bounds(chain: KinematicChain, q: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Velocity box keeping the joints able to stop inside their position limits.

    Besides the next Euler step, the speed toward a limit is capped so that
    braking at the acceleration limit, one step at a time, still stops short
    of it. With distance ``d`` and deceleration ``a`` the speed ``v`` must
    satisfy ``v^2 / (2 a) + v dt <= d``; the bound is inductive, since one
    braking step keeps the next state inside it.
    """
    lo, hi = chain.limit_arrays("pos")
    alo, ahi = chain.limit_arrays("acc")

    def braking(d: np.ndarray, a: np.ndarray) -> np.ndarray:
        d = np.maximum(d, 0.0)
        with np.errstate(invalid="ignore"):
            v = a * (np.sqrt(dt * dt + 2 * d / a) - dt)
        return np.where(np.isfinite(d), v, np.inf)

    ub = np.minimum((hi - q) / dt, braking(hi - q, ahi))
    lb = np.maximum((lo - q) / dt, -braking(q - lo, -alo))
    return lb, ub


# --- the continuous-spraying problem --------------------------------------------


@dataclass(frozen=True)
class ThreeLevel:
    """Translation, then approach-axis rotation, then joint posture."""


@dataclass(frozen=True)
class TwoLevelBlend:
    """Translation, then rotation blended with ``w`` times the posture term."""

    w: float = 1e-2

    def __post_init__(self) -> None:
        if not self.w > 0:
            raise ValueError("blend weight must be positive")


PtscMode = ThreeLevel | TwoLevelBlend


def spraying_problem(chain: KinematicChain, state: JointState, v_c: Sequence[float], omega_c: Sequence[float],
                     q_d: Sequence[float], gains: Gains, dt: float, mode: PtscMode = ThreeLevel(),
                     extra_ineq: tuple[np.ndarray, np.ndarray] | None = None, frame: str = "spray",
                     position_limits: bool = False) -> PrioritizedProblem:
    """Joint-velocity cascade for one control step of continuous spraying."""
    v_c = np.asarray(v_c, dtype=float)
    omega_c = np.asarray(omega_c, dtype=float)
    if v_c.shape != (3,) or omega_c.shape != (2,):
        raise DimensionError("v_c must be a 3-vector and omega_c a 2-vector")
    if not np.all(np.isfinite(v_c)):
        raise ValueError("commanded velocity must be finite")
    q = chain.check_q(state.q)
    if state.qd.shape != q.shape:
        raise DimensionError("state velocity does not match the chain")
    R, _, J = chain.frame_kinematics(q, frame)
    J_T = J[:3]
    J_R = (R.T @ J[3:])[:2]
    qd_c = joint_velocity_command(q, q_d, gains)
    eye = np.eye(chain.dof)
    if isinstance(mode, TwoLevelBlend):
        levels = [
            PriorityLevel(J_T, v_c, name="translation"),
            PriorityLevel(J_R, omega_c, blend=(eye, qd_c, mode.w), name="rotation+posture"),
        ]
    else:
        levels = [
            PriorityLevel(J_T, v_c, name="translation"),
            PriorityLevel(J_R, omega_c, name="rotation"),
            PriorityLevel(eye, qd_c, name="posture"),
        ]
    bounds = build_velocity_constraints(chain, state.qd, dt)
    lb, ub = bounds.lb.copy(), bounds.ub.copy()
    pos_clipped = np.zeros(chain.dof, dtype=bool)
    if position_limits:
        plo, phi = joint_position_bounds(chain, q, dt)
        new_lb, new_ub = np.maximum(lb, plo), np.minimum(ub, phi)
        # where the acceleration window cannot reach the position box, brake as hard as allowed toward it
        ok = new_lb <= new_ub
        pos_clipped = ~ok
        toward_lo = ~ok & (phi < lb)
        toward_hi = ~ok & (plo > ub)
        new_lb[toward_lo] = new_ub[toward_lo] = lb[toward_lo]
        new_lb[toward_hi] = new_ub[toward_hi] = ub[toward_hi]
        lb, ub = new_lb, new_ub
    A_in = b_in = None
    if extra_ineq is not None:
        A_in, b_in = extra_ineq
    return PrioritizedProblem(
        levels=levels, A_in=A_in, b_in=b_in, lb=lb, ub=ub,
        info={"collapsed": bounds.collapsed, "position_conflict": pos_clipped, "qd_c": qd_c,
              "J_T": J_T, "J_R": J_R},
    )
