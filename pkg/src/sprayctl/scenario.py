"""Scenario files and the two drivers: closed-loop continuous spraying and batch selective IK."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import InfeasibleError, ValidationError
from .kinematics import JointState, KinematicChain, chain_from_dict, demo_chain_path, load_chain
from .pik import IkReport, PikParams, Termination, solve_pik
from .ptsc import (
    PtscMode,
    QpHook,
    ThreeLevel,
    TwoLevelBlend,
    build_height_constraint,
    solve_ptsc,
    spraying_problem,
)
from .tasks import Gains, Task, TaskKind, approach_error_from_matrix, angular_velocity_command, tasks_from_list
from .trace import Trace, TraceRow

CONTINUOUS = "continuous_spraying"
SELECTIVE = "selective_ik"
BOUND_TOL = 1e-9


@dataclass(frozen=True)
class PiecewiseLinear:
    """Vector-valued piecewise-linear function of time, held constant outside the knots."""

    t: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.t, dtype=float)
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        if t.ndim != 1 or t.size == 0 or v.shape[0] != t.size:
            raise ValueError("profile needs one value row per knot time")
        if np.any(np.diff(t) <= 0):
            raise ValueError("profile knot times must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, value: Any) -> PiecewiseLinear:
        return cls(np.array([0.0]), np.atleast_2d(np.asarray(value, dtype=float)))

    def __call__(self, t: float) -> np.ndarray:
        return np.array([np.interp(t, self.t, self.values[:, j]) for j in range(self.values.shape[1])])


@dataclass(frozen=True)
class HeightConstraint:
    z_min: float
    frame: str = "nozzle"
    horizon: float | None = None


@dataclass
class Scenario:
    chain: KinematicChain
    mode: str
    name: str = ""
    frame: str = "spray"
    # continuous spraying
    velocity_profile: PiecewiseLinear | None = None
    desired_axis: PiecewiseLinear = field(default_factory=lambda: PiecewiseLinear.constant([0.0, 1.0, 0.0]))
    initial_q: np.ndarray | None = None
    q_d: np.ndarray | None = None
    duration: float = 10.0
    dt: float = 0.01
    gains: Gains = field(default_factory=Gains)
    ptsc_mode: PtscMode = field(default_factory=ThreeLevel)
    height_constraint: HeightConstraint | None = None
    joint_position_limits: bool = True
    # selective IK
    tasks: list[Task] = field(default_factory=list)
    initial_guesses: list[np.ndarray] = field(default_factory=list)
    pik_params: PikParams = field(default_factory=PikParams)
    random_batch: dict[str, Any] | None = None
    chain_file: Path | None = None

    def __post_init__(self) -> None:
        if self.mode not in (CONTINUOUS, SELECTIVE):
            raise ValueError(f"unknown scenario mode {self.mode!r}")
        if self.mode == CONTINUOUS:
            if not self.dt > 0:
                raise ValueError("dt must be positive")
            if self.duration < self.dt:
                raise ValueError("duration must be at least one step")
            if self.velocity_profile is None:
                raise ValueError("continuous spraying needs a velocity profile")
            if self.initial_q is None:
                raise ValueError("continuous spraying needs an initial configuration")
            if self.velocity_profile.t[0] > 0 or self.velocity_profile.t[-1] < self.duration:
                raise ValueError("velocity profile must cover [0, duration]")
            self.initial_q = self.chain.check_q(self.initial_q)
            self.q_d = self.initial_q.copy() if self.q_d is None else self.chain.check_q(self.q_d)
            self.chain.frame(self.frame)
            if self.height_constraint is not None:
                self.chain.frame(self.height_constraint.frame)
        else:
            if not self.tasks:
                raise ValueError("selective IK needs a non-empty task list")
            for task in self.tasks:
                task.check(self.chain)
            if not self.initial_guesses:
                raise ValueError("selective IK needs at least one initial guess")
            self.initial_guesses = [self.chain.check_q(q) for q in self.initial_guesses]


# --- scenario files -------------------------------------------------------------


def _require(data: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in data:
        raise ValidationError(f"missing required key {key!r}", where)
    return data[key]


def _profile(raw: Any, where: str, dim: int, value_key: str) -> PiecewiseLinear:
    try:
        if isinstance(raw, Mapping):
            return PiecewiseLinear(np.asarray(raw["t"], dtype=float), np.asarray(raw[value_key], dtype=float))
        value = np.asarray(raw, dtype=float)
        if value.shape != (dim,):
            raise ValueError(f"expected {dim} numbers")
        return PiecewiseLinear.constant(value)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"bad profile: {exc}", where) from None


def _mode(raw: Any, where: str) -> PtscMode:
    if raw is None:
        return ThreeLevel()
    kind = raw.get("type") if isinstance(raw, Mapping) else raw
    if kind == "three_level":
        return ThreeLevel()
    if kind == "two_level_blend":
        w = raw.get("w", 1e-2) if isinstance(raw, Mapping) else 1e-2
        return TwoLevelBlend(float(w))
    raise ValidationError(f"unknown ptsc_mode {kind!r} (three_level or two_level_blend)", where)


def scenario_from_dict(data: Mapping[str, Any], source: str = "<scenario>", base_dir: Path | None = None) -> Scenario:
    if not isinstance(data, Mapping):
        raise ValidationError("scenario must be a JSON object", source)
    mode = _require(data, "mode", source)
    chain_ref = data.get("chain", "demo")
    if isinstance(chain_ref, Mapping):
        chain = chain_from_dict(chain_ref, f"{source}:/chain")
        chain_file = None
    else:
        chain_file = demo_chain_path() if chain_ref == "demo" else (base_dir or Path(".")) / chain_ref
        chain = load_chain(chain_file)
    kw: dict[str, Any] = {"chain": chain, "mode": mode, "name": data.get("name", ""), "chain_file": chain_file,
                          "frame": data.get("frame", "spray")}
    try:
        if mode == CONTINUOUS:
            kw["velocity_profile"] = _profile(_require(data, "velocity_profile", source),
                                              f"{source}:/velocity_profile", 3, "v")
            if "desired_axis" in data:
                axis = _profile(data["desired_axis"], f"{source}:/desired_axis", 3, "axis")
                norms = np.linalg.norm(axis.values, axis=1)
                if np.any(np.abs(norms - 1.0) > 1e-2):
                    raise ValidationError("desired axis knots must be unit vectors", f"{source}:/desired_axis")
                kw["desired_axis"] = PiecewiseLinear(axis.t, axis.values / norms[:, None])
            kw["initial_q"] = np.asarray(_require(data, "initial_q", source), dtype=float)
            if "q_d" in data:
                kw["q_d"] = np.asarray(data["q_d"], dtype=float)
            kw["duration"] = float(data.get("duration", 10.0))
            kw["dt"] = float(data.get("dt", 0.01))
            kw["gains"] = Gains(**data.get("gains", {}))
            kw["ptsc_mode"] = _mode(data.get("ptsc_mode"), f"{source}:/ptsc_mode")
            hc = data.get("height_constraint")
            if hc is not None:
                kw["height_constraint"] = HeightConstraint(
                    z_min=float(_require(hc, "z_min", f"{source}:/height_constraint")),
                    frame=hc.get("frame", "nozzle"),
                    horizon=hc.get("horizon"),
                )
            kw["joint_position_limits"] = bool(data.get("joint_position_limits", True))
        elif mode == SELECTIVE:
            kw["tasks"] = tasks_from_list(data.get("tasks"), f"{source}:/tasks")
            guesses = _require(data, "initial_guesses", source)
            kw["initial_guesses"] = [np.asarray(g, dtype=float) for g in guesses]
            kw["pik_params"] = PikParams.from_dict(data.get("pik_params", {}))
            kw["random_batch"] = data.get("random_batch")
        else:
            raise ValidationError(f"unknown mode {mode!r} ({CONTINUOUS} or {SELECTIVE})", f"{source}:/mode")
        return Scenario(**kw)
    except ValidationError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ValidationError(str(exc), source) from None


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(exc.msg, f"{path}:{exc.lineno}:{exc.colno}") from None
    return scenario_from_dict(data, str(path), path.parent)


def shipped_scenarios() -> dict[str, Path]:
    folder = Path(__file__).parent / "data" / "scenarios"
    return {p.stem: p for p in sorted(folder.glob("*.json"))}


# --- continuous spraying ----------------------------------------------------------


def run_continuous(scenario: Scenario, on_qp: QpHook | None = None) -> Trace:
    """Closed-loop velocity control over ``[0, duration]`` with explicit Euler integration.

    Each row holds the state at time ``t`` and the joint velocity applied over
    the following step. Residuals are reported per task (translation,
    rotation, posture) in both cascade modes.
    """
    if scenario.mode != CONTINUOUS:
        raise ValueError("run_continuous needs a continuous_spraying scenario")
    chain = scenario.chain
    hc = scenario.height_constraint
    trace = Trace(dof=chain.dof, height_frame=hc.frame if hc else None, z_min=hc.z_min if hc else None)
    q = scenario.initial_q.copy()
    qd = np.zeros(chain.dof)
    dt = scenario.dt
    steps = int(round(scenario.duration / dt))
    for k in range(steps + 1):
        t = k * dt
        v_c = scenario.velocity_profile(t)
        axis = scenario.desired_axis(t)
        axis = axis / np.linalg.norm(axis)
        R, p, _ = chain.frame_kinematics(q, scenario.frame)
        _, local_err = approach_error_from_matrix(R, axis)
        omega_c = angular_velocity_command(local_err, scenario.gains)
        extra = None
        if hc is not None:
            extra = build_height_constraint(chain, q, hc.frame, hc.z_min, dt, hc.horizon)
        problem = spraying_problem(
            chain, JointState(q, qd), v_c, omega_c, scenario.q_d, scenario.gains, dt,
            mode=scenario.ptsc_mode, extra_ineq=extra, frame=scenario.frame,
            position_limits=scenario.joint_position_limits,
        )
        try:
            sol = solve_ptsc(problem, on_qp=on_qp)
        except InfeasibleError as exc:
            trace.status = f"infeasible at t={t:.9g}: {exc}"
            break
        lb, ub = problem.lb, problem.ub
        qd_new = np.clip(sol.x, lb, ub)
        info = problem.info
        res = (
            float(np.linalg.norm(v_c - info["J_T"] @ qd_new)),
            float(np.linalg.norm(omega_c - info["J_R"] @ qd_new)),
            float(np.linalg.norm(info["qd_c"] - qd_new)),
        )
        at_lb = qd_new - lb <= BOUND_TOL * (1.0 + np.abs(lb))
        at_ub = ub - qd_new <= BOUND_TOL * (1.0 + np.abs(ub))
        mask = sum(1 << j for j in range(chain.dof) if at_lb[j] or at_ub[j])
        height_flag = False
        if extra is not None:
            height_flag = bool((extra[0] @ qd_new - extra[1])[0] <= BOUND_TOL)
        if not sol.ok and trace.status == "ok":
            trace.status = f"cascade truncated at t={t:.9g} after {sol.solved_levels} levels"
        trace.rows.append(TraceRow(t=t, q=q.copy(), qd=qd_new, spray_pos=p.copy(), spray_axis=R[:, 2].copy(),
                                   level_residuals=res, active_bounds=mask, height_flag=height_flag))
        q = q + qd_new * dt
        qd = qd_new
    return trace


# --- selective spraying -----------------------------------------------------------


def run_selective(scenario: Scenario, on_qp: QpHook | None = None) -> list[IkReport]:
    """One IK solve per initial guess of the scenario's task stack."""
    if scenario.mode != SELECTIVE:
        raise ValueError("run_selective needs a selective_ik scenario")
    return [solve_pik(scenario.chain, q0, scenario.tasks, scenario.pik_params, on_qp=on_qp)
            for q0 in scenario.initial_guesses]


def sample_reachable_targets(chain: KinematicChain, count: int, rng: np.random.Generator,
                             frame: str = "spray") -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Targets generated by FK of random in-limit configurations, so each is reachable.

    Returns ``(q_sample, position, approach_axis)`` triples.
    """
    lo, hi = chain.limit_arrays("pos")
    lo = np.where(np.isfinite(lo), lo, -math.pi)
    hi = np.where(np.isfinite(hi), hi, math.pi)
    out = []
    for _ in range(count):
        q = rng.uniform(lo, hi)
        R, p = chain.frame_transform(q, frame)
        out.append((q, p, R[:, 2].copy()))
    return out


def run_random_batch(scenario: Scenario, count: int = 100, seed: int = 0, tol: float = 1e-3) -> dict[str, Any]:
    """Position + approach-axis IK toward random reachable targets; aggregate success rate.

    A solve succeeds when both task errors end below ``tol``.
    """
    chain = scenario.chain
    frame = scenario.frame
    rng = np.random.default_rng(seed)
    q0 = scenario.initial_guesses[0]
    results = []
    for _, p, axis in sample_reachable_targets(chain, count, rng, frame):
        tasks = [Task(TaskKind.FRAME_POSITION, p, frame, 1), Task(TaskKind.FRAME_APPROACH_AXIS, axis, frame, 2)]
        report = solve_pik(chain, q0, tasks, scenario.pik_params)
        ok = all(e < tol for _, e in report.per_task_error)
        results.append({"target": p.tolist(), "axis": axis.tolist(), "success": ok,
                        "errors": [e for _, e in report.per_task_error],
                        "termination": report.termination.value, "iterations": report.iterations})
    successes = sum(r["success"] for r in results)
    return {"count": count, "seed": seed, "tolerance": tol, "successes": successes,
            "success_rate": successes / count if count else float("nan"), "results": results}


def ik_summary(reports: list[IkReport]) -> dict[str, Any]:
    return {
        "reports": [r.to_dict() for r in reports],
        "terminations": sorted({r.termination.value for r in reports}),
        "all_converged": all(r.termination is not Termination.SOLVER_FAILURE for r in reports),
    }
