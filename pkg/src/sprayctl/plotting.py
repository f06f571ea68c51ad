"""Figures for run outputs, written next to the CSV/JSON they summarize."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .pik import IkReport  # noqa: E402
from .trace import Trace  # noqa: E402

_RES_LABELS = ("translation", "rotation", "posture")


def plot_trace(trace: Trace, path: str | Path, title: str = "") -> Path:
    """Spray-frame position, per-level residuals and joint velocities over time."""
    path = Path(path)
    fig, axes = plt.subplots(3, 1, figsize=(8, 9), sharex=True, constrained_layout=True)
    if len(trace) == 0:
        axes[0].text(0.5, 0.5, "empty trace", ha="center", va="center", transform=axes[0].transAxes)
        fig.savefig(path, dpi=110)
        plt.close(fig)
        return path

    t = trace.column("t")
    pos = trace.column("spray_pos")
    res = np.array([r.level_residuals for r in trace.rows])
    qd = trace.column("qd")
    saturated = trace.column("active_bounds") != 0

    ax = axes[0]
    for j, name in enumerate("xyz"):
        ax.plot(t, pos[:, j], label=name)
    if trace.z_min is not None:
        ax.axhline(trace.z_min, color="k", ls="--", lw=0.8, label=f"z_min ({trace.height_frame})")
    ax.set_ylabel("spray frame [m]")
    ax.legend(loc="best", fontsize=8)

    ax = axes[1]
    for j, name in enumerate(_RES_LABELS):
        ax.semilogy(t, np.maximum(res[:, j], 1e-16), label=name)
    ax.set_ylabel("level residual")
    ax.legend(loc="best", fontsize=8)

    ax = axes[2]
    for j in range(trace.dof):
        ax.plot(t, qd[:, j], lw=0.9, label=f"qd{j}")
    if saturated.any():
        ymin, ymax = ax.get_ylim()
        ax.fill_between(t, ymin, ymax, where=saturated, color="0.85", step="mid", label="bound active")
        ax.set_ylim(ymin, ymax)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("joint velocity [rad/s]")
    ax.legend(loc="best", fontsize=7, ncol=4)

    if title:
        fig.suptitle(title)
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_ik_reports(reports: list[IkReport], path: str | Path, labels: list[str] | None = None,
                    title: str = "") -> Path:
    """Final per-task error of each solve as grouped bars (log scale)."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(7, 4), constrained_layout=True)
    n_tasks = max((len(r.per_task_error) for r in reports), default=0)
    width = 0.8 / max(n_tasks, 1)
    x = np.arange(len(reports))
    for i in range(n_tasks):
        vals = [max(r.per_task_error[i][1], 1e-16) if i < len(r.per_task_error) else np.nan for r in reports]
        ax.bar(x + (i - (n_tasks - 1) / 2) * width, vals, width, label=f"task {i + 1}")
    ax.set_yscale("log")
    ax.set_xticks(x)
    ax.set_xticklabels(labels or [f"{r.termination.value}\n{r.wall_time * 1e3:.0f} ms" for r in reports], fontsize=8)
    ax.set_ylabel("final error norm")
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
