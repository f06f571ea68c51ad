"""Prioritized positional inverse kinematics.

Each iteration linearizes every task at the current configuration, clamps the
task errors, and solves one prioritized cascade for a bounded joint step.
The loop stops when the summed error norms, or the summed changes of those
norms between iterations, fall below their thresholds.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .errors import DimensionError, InfeasibleError, InvalidState
from .kinematics import KinematicChain
from .ptsc import PrioritizedProblem, PriorityLevel, QpHook, solve_ptsc
from .tasks import Task, TaskError, clamp_task_error, task_error_and_jacobian


class Termination(str, enum.Enum):
    ERROR_BELOW_THRESHOLD = "ErrorBelowThreshold"
    GRADIENT_STALLED = "GradientStalled"
    MAX_ITERATIONS = "MaxIterations"
    MAX_TIME = "MaxTime"
    SOLVER_FAILURE = "SolverFailure"


@dataclass(frozen=True)
class PikParams:
    use_constrained: bool = True
    err_norm_threshold: float = 1e-4
    grad_threshold: float = 1e-3
    step_bound: float = math.radians(10.0)
    polish: bool = True
    polish_grad_threshold: float = 1e-2
    polish_step_bound: float = math.radians(3.0)
    pos_clamp: float = 0.3
    ori_clamp: float = math.radians(30.0)
    # Maximum execution time / maximum number of iterations: user settings
    # without published values.
    max_iterations: int = 500
    max_time: float = 1.0

    def __post_init__(self) -> None:
        positive = ("err_norm_threshold", "grad_threshold", "step_bound", "polish_grad_threshold",
                    "polish_step_bound", "pos_clamp", "ori_clamp", "max_iterations", "max_time")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.polish_step_bound > self.step_bound:
            raise ValueError("polish_step_bound must not exceed step_bound")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> PikParams:
        """Angles in the dict are degrees under keys ending in ``_deg``."""
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            if key.endswith("_deg"):
                kwargs[key[:-4]] = math.radians(float(value))
            else:
                kwargs[key] = value
        return cls(**kwargs)


@dataclass
class IkReport:
    q_final: np.ndarray
    per_task_error: list[tuple[int, float]]
    iterations: int
    termination: Termination
    wall_time: float
    polished: bool
    history: list[dict[str, Any]] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "q_final": self.q_final.tolist(),
            "per_task_error": [[i, e] for i, e in self.per_task_error],
            "iterations": self.iterations,
            "termination": self.termination.value,
            "wall_time": self.wall_time,
            "polished": self.polished,
        }


def gradient_update(err_curr: TaskError, err_prev: TaskError) -> np.ndarray:
    """Change of the raw (unclamped) task error between two iterations."""
    if err_curr.e.shape != err_prev.e.shape:
        raise DimensionError("task errors of consecutive iterations differ in size")
    return err_curr.e - err_prev.e


def step_bounds(chain: KinematicChain, q: np.ndarray, step: float, use_constrained: bool) -> tuple[np.ndarray, np.ndarray]:
    """Box on the joint step: +-step, tightened so that q + dq respects the position limits."""
    lb = np.full(chain.dof, -step)
    ub = np.full(chain.dof, step)
    if use_constrained:
        lo, hi = chain.limit_arrays("pos")
        lb = np.maximum(lb, np.clip(lo - q, -step, step))
        ub = np.minimum(ub, np.clip(hi - q, -step, step))
    return lb, ub


def _evaluate(chain: KinematicChain, q: np.ndarray, tasks: Sequence[Task]) -> list[tuple[TaskError, np.ndarray, tuple | None]]:
    out = []
    for task in tasks:
        err, J = task_error_and_jacobian(chain, q, task)
        blend = None
        if task.blend is not None:
            btask, w = task.blend
            berr, bJ = task_error_and_jacobian(chain, q, btask)
            blend = (btask, berr, bJ, w)
        out.append((err, J, blend))
    return out


def solve_pik(chain: KinematicChain, q_initial: Sequence[float], tasks: Sequence[Task],
              params: PikParams = PikParams(),
              constraints: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None,
              on_qp: QpHook | None = None, record: bool = False) -> IkReport:
    """Run the iterative prioritized IK.

    ``tasks`` are ordered highest priority first. ``constraints`` optionally
    maps the current configuration to extra rows ``A dq >= b`` on the step.
    """
    start = time.perf_counter()
    q = chain.check_q(q_initial).copy()
    if not np.all(np.isfinite(q)):
        raise InvalidState("initial configuration is not finite")
    if not tasks:
        raise ValueError("at least one task is required")
    priorities = [t.priority for t in tasks]
    if any(a >= b for a, b in zip(priorities, priorities[1:])):
        raise ValueError("tasks must be strictly ordered by priority")
    for task in tasks:
        task.check(chain)

    clamps = (params.pos_clamp, params.ori_clamp)
    step = params.step_bound
    polished = False
    prev: list[TaskError] | None = None
    history: list[dict[str, Any]] = []
    iterations = 0

    while True:
        evals = _evaluate(chain, q, tasks)
        errs = [e for e, _, _ in evals]
        err_sum = sum(e.raw_norm for e in errs)
        if prev is None:
            grad_sum = math.inf
        else:
            grad_sum = sum(float(np.linalg.norm(gradient_update(c, p))) for c, p in zip(errs, prev))
        if record:
            history.append({"q": q.copy(), "err_sum": err_sum, "grad_sum": grad_sum, "step": step,
                            "errors": [e.raw_norm for e in errs]})

        # loop runs while both sums exceed their thresholds
        if err_sum < params.err_norm_threshold:
            termination = Termination.ERROR_BELOW_THRESHOLD
            break
        if grad_sum < params.grad_threshold:
            termination = Termination.GRADIENT_STALLED
            break
        if iterations >= params.max_iterations:
            termination = Termination.MAX_ITERATIONS
            break
        if time.perf_counter() - start > params.max_time:
            termination = Termination.MAX_TIME
            break
        if params.polish and not polished and grad_sum < params.polish_grad_threshold:
            step = params.polish_step_bound
            polished = True

        levels = []
        for task, (err, J, blend) in zip(tasks, evals):
            e = clamp_task_error(err, task, clamps).e
            blend_term = None
            if blend is not None:
                btask, berr, bJ, w = blend
                blend_term = (bJ, clamp_task_error(berr, btask, clamps).e, w)
            levels.append(PriorityLevel(J, e, blend=blend_term, name=task.kind.value))
        lb, ub = step_bounds(chain, q, step, params.use_constrained)
        A_in = b_in = None
        if constraints is not None:
            A_in, b_in = constraints(q)
        try:
            sol = solve_ptsc(PrioritizedProblem(levels, A_in=A_in, b_in=b_in, lb=lb, ub=ub), on_qp=on_qp)
        except InfeasibleError:
            termination = Termination.SOLVER_FAILURE
            break
        if not sol.ok:
            termination = Termination.SOLVER_FAILURE
            break
        dq = np.clip(sol.x, lb, ub)
        q = q + dq
        prev = errs
        iterations += 1

    return IkReport(
        q_final=q,
        per_task_error=[(i, e.raw_norm) for i, e in enumerate(errs)],
        iterations=iterations,
        termination=termination,
        wall_time=time.perf_counter() - start,
        polished=polished,
        history=history,
    )
