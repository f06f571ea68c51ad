"""Task definitions: errors, Jacobians, clamping and the proportional commands.

Every task error follows the convention ``e = target - current`` so that a
joint step ``dq`` with ``J @ dq = e`` moves the task onto its target to first
order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DimensionError, InvalidState, ValidationError
from .kinematics import FramePose, KinematicChain, quat_to_matrix

ANTIPARALLEL_TOL = 1e-9


class TaskKind(str, enum.Enum):
    FRAME_POSE = "frame_pose"
    FRAME_POSITION = "frame_position"
    FRAME_ORIENTATION = "frame_orientation"
    FRAME_APPROACH_AXIS = "frame_approach_axis"
    JOINT_POSTURE = "joint_posture"


_ERROR_DIM = {
    TaskKind.FRAME_POSE: 6,
    TaskKind.FRAME_POSITION: 3,
    TaskKind.FRAME_ORIENTATION: 3,
    TaskKind.FRAME_APPROACH_AXIS: 2,
}


@dataclass(frozen=True)
class Task:
    """One prioritized objective.

    ``target`` is a :class:`FramePose` for pose tasks, a quaternion
    ``(x, y, z, w)`` for orientation tasks, a unit 3-vector for approach-axis
    tasks and plain vectors otherwise. ``blend`` optionally mixes a second
    task into the same priority level with weight ``w``.
    """

    kind: TaskKind
    target: Any
    frame: str | None = None
    priority: int = 1
    gain: float = 1.0
    blend: tuple[Task, float] | None = None

    def __post_init__(self) -> None:
        kind = TaskKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is TaskKind.JOINT_POSTURE:
            if self.frame is not None:
                raise ValueError("joint posture tasks take no frame")
        elif not self.frame:
            raise ValueError(f"{kind.value} task needs a frame")
        target = self.target
        if kind is TaskKind.FRAME_POSE:
            if not isinstance(target, FramePose):
                raise TypeError("frame_pose target must be a FramePose")
        elif kind is TaskKind.FRAME_ORIENTATION:
            target = np.asarray(target, dtype=float)
            if target.shape != (4,) or abs(np.linalg.norm(target) - 1.0) > 1e-9:
                raise ValueError("frame_orientation target must be a unit quaternion")
        else:
            target = np.asarray(target, dtype=float)
            if target.ndim != 1:
                raise DimensionError("task target must be a vector")
            if kind is TaskKind.FRAME_POSITION and target.shape != (3,):
                raise DimensionError("frame_position target must be a 3-vector")
            if kind is TaskKind.FRAME_APPROACH_AXIS:
                if target.shape != (3,) or abs(np.linalg.norm(target) - 1.0) > 1e-9:
                    raise ValueError("approach axis target must be a unit 3-vector")
        object.__setattr__(self, "target", target)
        if self.gain <= 0:
            raise ValueError("task gain must be positive")
        if self.blend is not None and self.blend[1] <= 0:
            raise ValueError("blend weight must be positive")

    def error_dim(self, dof: int) -> int:
        return dof if self.kind is TaskKind.JOINT_POSTURE else _ERROR_DIM[self.kind]

    def check(self, chain: KinematicChain) -> None:
        """Raise if the task does not fit ``chain``."""
        if self.kind is TaskKind.JOINT_POSTURE:
            if self.target.shape != (chain.dof,):
                raise DimensionError(f"joint posture target needs {chain.dof} entries")
        else:
            chain.frame(self.frame)
        if self.blend is not None:
            self.blend[0].check(chain)


@dataclass(frozen=True)
class TaskError:
    e: np.ndarray
    raw_norm: float
    clamped: bool = False


@dataclass(frozen=True)
class Gains:
    kp_joint: float = 1.0
    kp_omega: float = 2.0

    def __post_init__(self) -> None:
        if not (self.kp_joint > 0 and self.kp_omega > 0):
            raise ValueError("gains must be positive")


def approach_error_from_matrix(R: np.ndarray, desired: np.ndarray) -> tuple[float, np.ndarray]:
    app = R[:, 2]
    cross = np.cross(app, desired)
    s = float(np.linalg.norm(cross))
    c = float(np.clip(app @ desired, -1.0, 1.0))
    # atan2 equals arccos(c) but keeps precision near 0 and pi
    alpha = float(np.arctan2(s, c))
    if c < -1.0 + ANTIPARALLEL_TOL:
        # cross product vanishes; rotate about the frame's own x axis
        return alpha, np.array([alpha, 0.0])
    err_base = cross * (alpha / s) if s > 1e-300 else cross
    local = R.T @ err_base
    assert abs(local[2]) <= 1e-9 * max(1.0, alpha), "approach error has a local z component"
    return alpha, local[:2]


def approach_axis_error(current: FramePose, desired_axis: Sequence[float]) -> tuple[float, np.ndarray]:
    """Angle between the frame's z-axis and ``desired_axis`` and the local x/y error.

    The error is the rotation vector taking the current approach axis onto the
    desired one, expressed in the current frame; its z component vanishes
    identically and is dropped.
    """
    desired = np.asarray(desired_axis, dtype=float)
    if desired.shape != (3,) or abs(np.linalg.norm(desired) - 1.0) > 1e-9:
        raise ValueError("desired axis must be a unit 3-vector")
    return approach_error_from_matrix(current.matrix, desired)


def angular_velocity_command(alpha_local: Sequence[float], gains: Gains) -> np.ndarray:
    return gains.kp_omega * np.asarray(alpha_local, dtype=float)


def joint_velocity_command(q: Sequence[float], q_d: Sequence[float], gains: Gains) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    q_d = np.asarray(q_d, dtype=float)
    if q.shape != q_d.shape:
        raise DimensionError(f"q has shape {q.shape} but q_d has shape {q_d.shape}")
    return gains.kp_joint * (q_d - q)


def _rotvec(R: np.ndarray) -> np.ndarray:
    return Rotation.from_matrix(R).as_rotvec()


def task_error_and_jacobian(chain: KinematicChain, q: Any, task: Task) -> tuple[TaskError, np.ndarray]:
    """Error (target minus current) and its Jacobian for one task.

    Frame rows are the linearization at zero error: orientation-type errors
    use the plain angular-velocity rows rather than the exact derivative of
    the log map.
    """
    q = chain.check_q(q)
    if not np.all(np.isfinite(q)):
        raise InvalidState("non-finite joint vector")
    kind = task.kind
    if kind is TaskKind.JOINT_POSTURE:
        if task.target.shape != q.shape:
            raise DimensionError(f"joint posture target needs {chain.dof} entries")
        e = task.target - q
        J = np.eye(chain.dof)
    else:
        R, p, J6 = chain.frame_kinematics(q, task.frame)
        if kind is TaskKind.FRAME_POSITION:
            e, J = task.target - p, J6[:3]
        elif kind is TaskKind.FRAME_ORIENTATION:
            e, J = _rotvec(quat_to_matrix(task.target) @ R.T), J6[3:]
        elif kind is TaskKind.FRAME_POSE:
            target: FramePose = task.target
            e = np.concatenate([target.position - p, _rotvec(target.matrix @ R.T)])
            J = J6
        else:
            _, e = approach_error_from_matrix(R, task.target)
            J = (R.T @ J6[3:])[:2]
    if not np.all(np.isfinite(e)):
        raise InvalidState(f"non-finite task error for {kind.value}")
    e = task.gain * e
    J = task.gain * J
    return TaskError(e=e, raw_norm=float(np.linalg.norm(e))), J


def _rescale(v: np.ndarray, limit: float) -> tuple[np.ndarray, bool]:
    norm = float(np.linalg.norm(v))
    # a rescaled vector can land a few ulps above the limit; leave it alone so
    # that clamping twice is the same as clamping once
    if norm > limit * (1.0 + 1e-12):
        return v * (limit / norm), True
    return v, False


def clamp_task_error(err: TaskError, task: Task, clamps: tuple[float, float]) -> TaskError:
    """Limit the error norm: positional parts by ``clamps[0]``, rotational parts by ``clamps[1]``.

    Joint posture errors are radians and use the rotational clamp.
    """
    pos_clamp, ori_clamp = clamps
    if pos_clamp <= 0 or ori_clamp <= 0:
        raise ValueError("clamp magnitudes must be positive")
    e = err.e
    if task.kind is TaskKind.FRAME_POSE:
        p, cp = _rescale(e[:3], pos_clamp)
        r, cr = _rescale(e[3:], ori_clamp)
        new, clamped = np.concatenate([p, r]), cp or cr
    elif task.kind is TaskKind.FRAME_POSITION:
        new, clamped = _rescale(e, pos_clamp)
    else:
        new, clamped = _rescale(e, ori_clamp)
    return replace(err, e=new, clamped=err.clamped or clamped)


# --- task list files ----------------------------------------------------------


def _parse_rotation(obj: Any, where: str) -> np.ndarray:
    if isinstance(obj, Mapping):
        if "rpy" in obj:
            return Rotation.from_euler("xyz", np.asarray(obj["rpy"], dtype=float)).as_quat()
        if "quat" in obj:
            return np.asarray(obj["quat"], dtype=float)
        raise ValidationError("orientation needs 'rpy' or 'quat'", where)
    arr = np.asarray(obj, dtype=float)
    if arr.shape != (4,):
        raise ValidationError("orientation must be a quaternion [x, y, z, w] or {'rpy': [...]}", where)
    return arr


def task_from_dict(data: Mapping[str, Any], where: str = "<task>") -> Task:
    """Decode one task list entry; see the README for the schema."""
    if not isinstance(data, Mapping):
        raise ValidationError("task entry must be an object", where)
    try:
        kind = TaskKind(data.get("type"))
    except ValueError:
        kinds = ", ".join(k.value for k in TaskKind)
        raise ValidationError(f"unknown task type {data.get('type')!r} (expected one of {kinds})", f"{where}/type") from None
    raw = data.get("target")
    if raw is None:
        raise ValidationError("task needs a target", f"{where}/target")
    try:
        if kind is TaskKind.FRAME_POSE:
            if not isinstance(raw, Mapping) or "xyz" not in raw:
                raise ValidationError("frame_pose target needs 'xyz' and 'rpy' or 'quat'", f"{where}/target")
            target: Any = FramePose(np.asarray(raw["xyz"], dtype=float), _parse_rotation(raw, f"{where}/target"))
        elif kind is TaskKind.FRAME_ORIENTATION:
            target = _parse_rotation(raw, f"{where}/target")
        elif kind is TaskKind.FRAME_APPROACH_AXIS:
            target = np.asarray(raw, dtype=float)
            norm = np.linalg.norm(target)
            # input values such as [0.577, 0.577, -0.577] are rounded; normalize
            if target.shape != (3,) or not abs(norm - 1.0) < 1e-2:
                raise ValidationError("approach axis must be a (near) unit 3-vector", f"{where}/target")
            target = target / norm
        else:
            target = np.asarray(raw, dtype=float)
        blend = None
        if data.get("weight_blend") is not None:
            wb = data["weight_blend"]
            if not isinstance(wb, Mapping) or "weight" not in wb or "task" not in wb:
                raise ValidationError("weight_blend needs 'weight' and 'task'", f"{where}/weight_blend")
            blend = (task_from_dict(wb["task"], f"{where}/weight_blend/task"), float(wb["weight"]))
        return Task(
            kind=kind,
            target=target,
            frame=data.get("frame"),
            priority=int(data.get("priority", 1)),
            gain=float(data.get("gain", 1.0)),
            blend=blend,
        )
    except ValidationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ValidationError(str(exc), where) from None


def tasks_from_list(data: Any, where: str = "<tasks>") -> list[Task]:
    """Decode a task list and sort it by priority (1 is highest)."""
    if not isinstance(data, list) or not data:
        raise ValidationError("task list must be a non-empty array", where)
    tasks = [task_from_dict(entry, f"{where}/{i}") for i, entry in enumerate(data)]
    priorities = [t.priority for t in tasks]
    if len(set(priorities)) != len(priorities):
        raise ValidationError("task priorities must be distinct", where)
    return sorted(tasks, key=lambda t: t.priority)


def task_to_dict(task: Task) -> dict:
    out: dict[str, Any] = {"type": task.kind.value, "priority": task.priority}
    if task.frame is not None:
        out["frame"] = task.frame
    if task.kind is TaskKind.FRAME_POSE:
        out["target"] = {"xyz": task.target.position.tolist(), "quat": task.target.rotation.tolist()}
    else:
        out["target"] = np.asarray(task.target).tolist()
    if task.gain != 1.0:
        out["gain"] = task.gain
    if task.blend is not None:
        out["weight_blend"] = {"weight": task.blend[1], "task": task_to_dict(task.blend[0])}
    return out


__all__ = [
    "Gains",
    "Task",
    "TaskError",
    "TaskKind",
    "angular_velocity_command",
    "approach_axis_error",
    "clamp_task_error",
    "joint_velocity_command",
    "task_error_and_jacobian",
    "task_from_dict",
    "task_to_dict",
    "tasks_from_list",
]
