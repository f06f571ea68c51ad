"""Serial revolute chains: forward kinematics and geometric Jacobians.

Rotations are carried as unit quaternions in scalar-last order ``(x, y, z, w)``
(the SciPy convention) and converted to matrices for the heavy lifting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DimensionError, NotFound, ValidationError

UNIT_TOL = 1e-9
JOINT_KINDS = ("revolute",)


def _unit_quat(quat: Sequence[float]) -> np.ndarray:
    quat = np.asarray(quat, dtype=float)
    if quat.shape != (4,):
        raise DimensionError(f"quaternion must have 4 components, got shape {quat.shape}")
    if abs(np.linalg.norm(quat) - 1.0) > UNIT_TOL:
        raise ValueError(f"quaternion is not unit norm: |q| = {np.linalg.norm(quat)!r}")
    return quat


def quat_to_matrix(quat: Sequence[float]) -> np.ndarray:
    x, y, z, w = quat
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(rot: np.ndarray) -> np.ndarray:
    quat = Rotation.from_matrix(rot).as_quat()
    # canonical sign keeps outputs reproducible
    if quat[3] < 0:
        quat = -quat
    return quat / np.linalg.norm(quat)


def axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    C = 1.0 - c
    return np.array(
        [
            [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
            [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
            [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
        ]
    )


@dataclass(frozen=True)
class JointLimits:
    pos: tuple[float, float] = (-np.inf, np.inf)
    vel: tuple[float, float] = (-np.inf, np.inf)
    acc: tuple[float, float] = (-np.inf, np.inf)

    def __post_init__(self) -> None:
        for name in ("pos", "vel", "acc"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} limits must satisfy lo <= hi, got ({lo}, {hi})")
            object.__setattr__(self, name, (float(lo), float(hi)))


@dataclass(frozen=True)
class JointSpec:
    """One revolute joint.

    ``origin_xyz``/``origin_quat`` place the joint frame relative to the
    previous joint frame (after that joint's rotation); ``axis`` is expressed
    in the joint frame.
    """

    axis: np.ndarray
    origin_xyz: np.ndarray = field(default_factory=lambda: np.zeros(3))
    origin_quat: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))
    limits: JointLimits = field(default_factory=JointLimits)
    kind: str = "revolute"

    def __post_init__(self) -> None:
        if self.kind not in JOINT_KINDS:
            raise ValueError(f"unsupported joint kind {self.kind!r}")
        axis = np.asarray(self.axis, dtype=float)
        if axis.shape != (3,):
            raise DimensionError(f"joint axis must be a 3-vector, got shape {axis.shape}")
        if abs(np.linalg.norm(axis) - 1.0) > UNIT_TOL:
            raise ValueError(f"joint axis is not unit norm: {axis.tolist()}")
        xyz = np.asarray(self.origin_xyz, dtype=float)
        if xyz.shape != (3,):
            raise DimensionError("joint origin translation must be a 3-vector")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "origin_xyz", xyz)
        object.__setattr__(self, "origin_quat", _unit_quat(self.origin_quat))


@dataclass(frozen=True)
class FrameSpec:
    """A frame rigidly attached to the output of joint ``parent_joint``."""

    parent_joint: int
    xyz: np.ndarray = field(default_factory=lambda: np.zeros(3))
    quat: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))

    def __post_init__(self) -> None:
        xyz = np.asarray(self.xyz, dtype=float)
        if xyz.shape != (3,):
            raise DimensionError("frame translation must be a 3-vector")
        object.__setattr__(self, "xyz", xyz)
        object.__setattr__(self, "quat", _unit_quat(self.quat))


@dataclass(frozen=True)
class FramePose:
    position: np.ndarray
    rotation: np.ndarray  # unit quaternion, body-to-base

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "rotation", _unit_quat(self.rotation))

    @property
    def matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    @property
    def approach_axis(self) -> np.ndarray:
        """Local z-axis expressed in the base frame."""
        return self.matrix[:, 2]

    @classmethod
    def from_matrix(cls, rot: np.ndarray, position: np.ndarray) -> FramePose:
        return cls(position=np.array(position, dtype=float), rotation=matrix_to_quat(rot))


@dataclass
class JointState:
    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self) -> None:
        self.q = np.asarray(self.q, dtype=float)
        self.qd = np.asarray(self.qd, dtype=float)
        if self.q.shape != self.qd.shape or self.q.ndim != 1:
            raise DimensionError("q and qd must be vectors of equal length")


class KinematicChain:
    """Immutable serial chain of revolute joints with named attached frames."""

    def __init__(self, joints: Sequence[JointSpec], frames: Mapping[str, FrameSpec]) -> None:
        if len(joints) < 1:
            raise ValueError("a chain needs at least one joint")
        self._joints = tuple(joints)
        self._frames = dict(frames)
        for name, frame in self._frames.items():
            if not 0 <= frame.parent_joint < len(self._joints):
                raise ValueError(
                    f"frame {name!r} has parent joint {frame.parent_joint}, chain dof is {len(self._joints)}"
                )
        # cached matrices for the hot loops
        self._origin_rot = tuple(quat_to_matrix(j.origin_quat) for j in self._joints)
        self._frame_rot = {n: quat_to_matrix(f.quat) for n, f in self._frames.items()}

    @property
    def joints(self) -> tuple[JointSpec, ...]:
        return self._joints

    @property
    def frames(self) -> dict[str, FrameSpec]:
        return dict(self._frames)

    @property
    def dof(self) -> int:
        return len(self._joints)

    def limit_arrays(self, kind: str) -> tuple[np.ndarray, np.ndarray]:
        """Stacked (lo, hi) arrays for ``kind`` in {"pos", "vel", "acc"}."""
        pairs = np.array([getattr(j.limits, kind) for j in self._joints], dtype=float)
        return pairs[:, 0].copy(), pairs[:, 1].copy()

    def frame(self, name: str) -> FrameSpec:
        try:
            return self._frames[name]
        except KeyError:
            raise NotFound(f"unknown frame {name!r}; chain has {sorted(self._frames)}") from None

    def check_q(self, q: Any) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.dof,):
            raise DimensionError(f"expected joint vector of length {self.dof}, got shape {q.shape}")
        return q

    def reach(self) -> float:
        """Upper bound on the distance from the first joint to any frame."""
        links = sum(float(np.linalg.norm(j.origin_xyz)) for j in self._joints[1:])
        tips = max((float(np.linalg.norm(f.xyz)) for f in self._frames.values()), default=0.0)
        return links + tips

    def joint_transforms(self, q: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-joint (R_out, origin, axis_world) after applying each joint angle."""
        q = self.check_q(q)
        n = self.dof
        rots = np.empty((n, 3, 3))
        origins = np.empty((n, 3))
        axes = np.empty((n, 3))
        R = np.eye(3)
        p = np.zeros(3)
        for i, joint in enumerate(self._joints):
            p = p + R @ joint.origin_xyz
            R = R @ self._origin_rot[i]
            axes[i] = R @ joint.axis
            origins[i] = p
            R = R @ axis_angle_matrix(joint.axis, q[i])
            rots[i] = R
        return rots, origins, axes

    def frame_kinematics(self, q: np.ndarray, frame: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Rotation matrix, position and 6 x dof Jacobian of ``frame`` in one pass."""
        spec = self.frame(frame)
        rots, origins, axes = self.joint_transforms(q)
        k = spec.parent_joint
        R = rots[k] @ self._frame_rot[frame]
        p = origins[k] + rots[k] @ spec.xyz
        J = np.zeros((6, self.dof))
        J[:3, : k + 1] = np.cross(axes[: k + 1], p - origins[: k + 1]).T
        J[3:, : k + 1] = axes[: k + 1].T
        return R, p, J

    def frame_transform(self, q: np.ndarray, frame: str) -> tuple[np.ndarray, np.ndarray]:
        spec = self.frame(frame)
        rots, origins, _ = self.joint_transforms(q)
        k = spec.parent_joint
        return rots[k] @ self._frame_rot[frame], origins[k] + rots[k] @ spec.xyz

    def __repr__(self) -> str:
        return f"KinematicChain(dof={self.dof}, frames={sorted(self._frames)})"


def forward_kinematics(chain: KinematicChain, q: Any, frame: str) -> FramePose:
    R, p = chain.frame_transform(q, frame)
    return FramePose.from_matrix(R, p)


def geometric_jacobian(chain: KinematicChain, q: Any, frame: str) -> np.ndarray:
    """6 x dof Jacobian; rows 0-2 linear, rows 3-5 angular velocity, both in base."""
    return chain.frame_kinematics(q, frame)[2]


def local_rotational_rows(chain: KinematicChain, q: Any, frame: str) -> np.ndarray:
    """Angular-velocity map in the frame's own x and y axes (2 x dof)."""
    R, _, J = chain.frame_kinematics(q, frame)
    return (R.T @ J[3:])[:2]


# --- chain description files -------------------------------------------------


def _vec(obj: Any, n: int, where: str, location: str) -> np.ndarray:
    try:
        arr = np.asarray(obj, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(f"{where} must be a list of {n} numbers", location) from None
    if arr.shape != (n,):
        raise ValidationError(f"{where} must be a list of {n} numbers, got {obj!r}", location)
    return arr


def _rpy_quat(rpy: np.ndarray) -> np.ndarray:
    # lowercase sequence = extrinsic rotations about fixed X, Y, Z
    quat = Rotation.from_euler("xyz", rpy).as_quat()
    return quat / np.linalg.norm(quat)


def _pair(obj: Any, where: str, location: str) -> tuple[float, float]:
    arr = _vec(obj, 2, where, location)
    return float(arr[0]), float(arr[1])


def chain_from_dict(data: Mapping[str, Any], source: str = "<chain>") -> KinematicChain:
    """Build a chain from the decoded JSON description.

    Schema errors are reported as ``source:/json/pointer``.
    """
    if not isinstance(data, Mapping):
        raise ValidationError("chain description must be a JSON object", source)
    raw_joints = data.get("joints")
    if not isinstance(raw_joints, list) or not raw_joints:
        raise ValidationError("'joints' must be a non-empty list", f"{source}:/joints")
    joints = []
    for i, raw in enumerate(raw_joints):
        loc = f"{source}:/joints/{i}"
        if not isinstance(raw, Mapping):
            raise ValidationError("joint entry must be an object", loc)
        axis = _vec(raw.get("axis"), 3, "axis", f"{loc}/axis")
        norm = np.linalg.norm(axis)
        if abs(norm - 1.0) > UNIT_TOL:
            raise ValidationError(f"axis must be unit norm, |axis| = {norm:.12g}", f"{loc}/axis")
        origin = raw.get("origin", {})
        xyz = _vec(origin.get("xyz", [0, 0, 0]), 3, "origin.xyz", f"{loc}/origin/xyz")
        rpy = _vec(origin.get("rpy", [0, 0, 0]), 3, "origin.rpy", f"{loc}/origin/rpy")
        lim = raw.get("limits", {})
        inf = [-np.inf, np.inf]
        try:
            limits = JointLimits(
                pos=_pair(lim.get("pos", inf), "limits.pos", f"{loc}/limits/pos"),
                vel=_pair(lim.get("vel", inf), "limits.vel", f"{loc}/limits/vel"),
                acc=_pair(lim.get("acc", inf), "limits.acc", f"{loc}/limits/acc"),
            )
            joints.append(
                JointSpec(axis=axis, origin_xyz=xyz, origin_quat=_rpy_quat(rpy), limits=limits,
                          kind=raw.get("kind", "revolute"))
            )
        except ValueError as exc:
            raise ValidationError(str(exc), loc) from None
    raw_frames = data.get("frames", {})
    if not isinstance(raw_frames, Mapping):
        raise ValidationError("'frames' must be an object", f"{source}:/frames")
    frames = {}
    for name, raw in raw_frames.items():
        loc = f"{source}:/frames/{name}"
        parent = raw.get("parent_joint") if isinstance(raw, Mapping) else None
        if not isinstance(parent, int) or not 0 <= parent < len(joints):
            raise ValidationError(f"parent_joint must be an integer in [0, {len(joints)})", f"{loc}/parent_joint")
        xyz = _vec(raw.get("xyz", [0, 0, 0]), 3, "xyz", f"{loc}/xyz")
        rpy = _vec(raw.get("rpy", [0, 0, 0]), 3, "rpy", f"{loc}/rpy")
        frames[name] = FrameSpec(parent_joint=parent, xyz=xyz, quat=_rpy_quat(rpy))
    return KinematicChain(joints, frames)


def load_chain(path: str | Path) -> KinematicChain:
    """Read a chain description file; decode errors carry ``path:line:col``."""
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(exc.msg, f"{path}:{exc.lineno}:{exc.colno}") from None
    return chain_from_dict(data, str(path))


def demo_chain_path() -> Path:
    return Path(__file__).parent / "data" / "demo_chain.json"


def demo_chain() -> KinematicChain:
    """The shipped 6-DOF spraying arm (spraying frame reach about 1.35 m)."""
    return load_chain(demo_chain_path())
