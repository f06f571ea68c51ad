"""Per-step records of a closed-loop run and their CSV/JSON forms."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .errors import SprayctlError


class TraceIOError(SprayctlError, OSError):
    """Writing or reading a trace file failed."""


@dataclass
class TraceRow:
    t: float
    q: np.ndarray
    qd: np.ndarray
    spray_pos: np.ndarray
    spray_axis: np.ndarray
    level_residuals: tuple[float, float, float]  # translation, rotation, posture
    active_bounds: int  # bit j set when joint j's velocity sits on a bound
    height_flag: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "t": float(self.t),
            "q": [float(v) for v in self.q],
            "qd": [float(v) for v in self.qd],
            "spray_pos": [float(v) for v in self.spray_pos],
            "spray_axis": [float(v) for v in self.spray_axis],
            "level_residuals": [float(v) for v in self.level_residuals],
            "active_bounds": int(self.active_bounds),
            "height_flag": bool(self.height_flag),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> TraceRow:
        return cls(
            t=float(d["t"]),
            q=np.array(d["q"], dtype=float),
            qd=np.array(d["qd"], dtype=float),
            spray_pos=np.array(d["spray_pos"], dtype=float),
            spray_axis=np.array(d["spray_axis"], dtype=float),
            level_residuals=tuple(float(v) for v in d["level_residuals"]),
            active_bounds=int(d["active_bounds"]),
            height_flag=bool(d["height_flag"]),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TraceRow):
            return NotImplemented
        return self.to_dict() == other.to_dict()


@dataclass
class Trace:
    dof: int
    rows: list[TraceRow] = field(default_factory=list)
    status: str = "ok"
    height_frame: str | None = None
    z_min: float | None = None

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def column(self, name: str) -> np.ndarray:
        """Stack one field over all rows (e.g. ``"qd"`` gives a steps x dof array)."""
        return np.array([getattr(r, name) for r in self.rows])


def csv_header(dof: int) -> list[str]:
    return (
        ["t"]
        + [f"q{i}" for i in range(dof)]
        + [f"qd{i}" for i in range(dof)]
        + ["px", "py", "pz", "ax", "ay", "az", "res1", "res2", "res3", "bounds", "height"]
    )


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


def _csv_lines(trace: Trace) -> Iterable[str]:
    yield ",".join(csv_header(trace.dof))
    for r in trace.rows:
        fields = [_fmt(r.t)]
        fields += [_fmt(v) for v in r.q]
        fields += [_fmt(v) for v in r.qd]
        fields += [_fmt(v) for v in r.spray_pos]
        fields += [_fmt(v) for v in r.spray_axis]
        fields += [_fmt(v) for v in r.level_residuals]
        fields += [str(int(r.active_bounds)), "1" if r.height_flag else "0"]
        yield ",".join(fields)


def trace_to_csv(trace: Trace) -> str:
    return "\n".join(_csv_lines(trace)) + "\n"


def trace_to_json(trace: Trace) -> str:
    doc = {
        "dof": trace.dof,
        "status": trace.status,
        "height_frame": trace.height_frame,
        "z_min": trace.z_min,
        "rows": [r.to_dict() for r in trace.rows],
    }
    return json.dumps(doc, indent=1) + "\n"


def trace_from_json(text: str) -> Trace:
    doc = json.loads(text)
    return Trace(
        dof=int(doc["dof"]),
        rows=[TraceRow.from_dict(r) for r in doc["rows"]],
        status=doc.get("status", "ok"),
        height_frame=doc.get("height_frame"),
        z_min=doc.get("z_min"),
    )


def reports_to_csv(reports) -> str:
    """One row per IK report; wall time is left out so the bytes are reproducible."""
    n_tasks = max((len(r.per_task_error) for r in reports), default=0)
    lines = [",".join(["guess", "termination", "iterations", "polished"] + [f"err{i}" for i in range(n_tasks)])]
    for k, r in enumerate(reports):
        fields = [str(k), r.termination.value, str(r.iterations), str(int(r.polished))]
        fields += [_fmt(e) for _, e in r.per_task_error]
        lines.append(",".join(fields))
    return "\n".join(lines) + "\n"


def emit_trace(trace: Trace, format: str, path: str | Path) -> None:
    """Write ``trace`` as ``csv`` or ``json``; output bytes depend only on the trace."""
    if format == "csv":
        text = trace_to_csv(trace)
    elif format == "json":
        text = trace_to_json(trace)
    else:
        raise ValueError(f"unknown trace format {format!r}")
    path = Path(path)
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise TraceIOError(f"{path}: {exc.strerror or exc}") from exc
