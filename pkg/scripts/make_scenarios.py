"""Regenerate the shipped scenario files under src/sprayctl/data/scenarios.

The continuous-spraying start configurations are solved here with the IK
solver (tight thresholds) so that the spraying frame starts on its desired
approach axis; the resulting joint vectors are frozen into the files.

    python scripts/make_scenarios.py
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from sprayctl.kinematics import demo_chain
from sprayctl.pik import PikParams, solve_pik
from sprayctl.tasks import Task

OUT = Path(__file__).resolve().parents[1] / "src" / "sprayctl" / "data" / "scenarios"
NOMINAL = [1.3, 0.3, 1.3, 0.0, 0.8, 0.0]
ELBOW_TARGET = [0.0, -0.5, 0.5]
IK_EXAMPLES = [
    ([0.4, 1.0, 0.2], [0, 1, 0]),
    ([0.4, 1.0, 0.8], [0.511, 0.511, 0.69]),
    ([0.4, 1.0, 0.8], [0.577, 0.577, -0.577]),
]
IK_GUESS = [1.2, 0.6, 1.0, 0.0, 0.8, 0.0]


def unit(v):
    v = np.asarray(v, dtype=float)
    return (v / np.linalg.norm(v)).tolist()


def start_configuration(position, axis):
    chain = demo_chain()
    tasks = [
        Task("frame_position", position, "spray", 1),
        Task("frame_approach_axis", unit(axis), "spray", 2),
        Task("joint_posture", NOMINAL, None, 3),
    ]
    params = PikParams(grad_threshold=1e-14, err_norm_threshold=1e-14, max_iterations=400, max_time=10.0)
    report = solve_pik(chain, NOMINAL, tasks, params)
    assert report.per_task_error[0][1] < 1e-10 and report.per_task_error[1][1] < 1e-10, report
    return [float(v) for v in report.q_final]


def slow_profile():
    """Down, turn, up, then a lateral pass; |v| = 0.2 m/s outside the ramps."""
    s = 0.2
    knots = [
        (0.0, [0, 0, 0]),
        (0.5, [0, 0, -s]),
        (3.5, [0, 0, -s]),
        (4.5, [0, 0, s]),
        (6.5, [0, 0, s]),
        (7.0, [-s, 0, 0]),
        (9.5, [-s, 0, 0]),
        (10.0, [0, 0, 0]),
    ]
    return {"t": [k[0] for k in knots], "v": [k[1] for k in knots]}


def fast_profile():
    """Vertical up/down passes at 0.8 m/s with 0.25 s reversals."""
    s = 0.8
    knots = [(0.0, [0, 0, 0]), (0.25, [0, 0, -s])]
    # the first leg is half as long so the sweep stays centred on the start height
    t, sign, hold = 0.25, -1, 0.125
    while t + hold + 0.25 < 9.75:
        t += hold
        hold = 0.5
        knots.append((t, [0, 0, sign * s]))
        t += 0.25
        sign = -sign
        knots.append((t, [0, 0, sign * s]))
    knots.append((t + 0.25, [0, 0, 0]))
    knots.append((10.0, [0, 0, 0]))
    return {"t": [round(k[0], 6) for k in knots], "v": [k[1] for k in knots]}


def write(name, doc):
    path = OUT / f"{name}.json"
    path.write_text(json.dumps(doc, indent=2) + "\n")
    print("wrote", path)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    axis_up = unit([0, 1, 0.4])
    q_slow = start_configuration([0.0, 0.8, 1.05], axis_up)
    q_fast = start_configuration([0.0, 0.8, 0.7], axis_up)
    common = {"mode": "continuous_spraying", "chain": "demo", "frame": "spray", "duration": 10.0, "dt": 0.01,
              "gains": {"kp_joint": 1.0, "kp_omega": 2.0}, "joint_position_limits": True}
    write("spray_slow", {
        "name": "spray_slow",
        "description": "0.2 m/s canopy pass; full 3T2R task and posture tracked",
        **common,
        "ptsc_mode": {"type": "three_level"},
        "velocity_profile": slow_profile(),
        "desired_axis": axis_up,
        "initial_q": q_slow,
    })
    write("spray_slow_height", {
        "name": "spray_slow_height",
        "description": "same pass as spray_slow with the nozzle kept at least 0.3 m above the arm base",
        **common,
        "ptsc_mode": {"type": "three_level"},
        "velocity_profile": slow_profile(),
        "desired_axis": axis_up,
        "initial_q": q_slow,
        "height_constraint": {"frame": "nozzle", "z_min": 0.3, "horizon": 0.3},
    })
    write("spray_fast", {
        "name": "spray_fast",
        "description": "0.8 m/s vertical passes; two-level cascade with blended posture term",
        **common,
        "ptsc_mode": {"type": "two_level_blend", "w": 0.01},
        "velocity_profile": fast_profile(),
        "desired_axis": axis_up,
        "initial_q": q_fast,
    })
    for i, (pos, axis) in enumerate(IK_EXAMPLES, start=1):
        write(f"selective_example{i}", {
            "name": f"selective_example{i}",
            "description": "spraying frame position > approach axis > elbow position",
            "mode": "selective_ik",
            "chain": "demo",
            "tasks": [
                {"type": "frame_position", "frame": "spray", "target": pos, "priority": 1},
                {"type": "frame_approach_axis", "frame": "spray", "target": axis, "priority": 2},
                {"type": "frame_position", "frame": "elbow", "target": ELBOW_TARGET, "priority": 3},
            ],
            "initial_guesses": [IK_GUESS],
            "pik_params": {
                "use_constrained": True,
                "grad_threshold": 1e-3,
                "step_bound_deg": 10.0,
                "polish": True,
                "polish_grad_threshold": 1e-2,
                "polish_step_bound_deg": 3.0,
                "pos_clamp": 0.3,
                "ori_clamp_deg": 30.0,
            },
        })


if __name__ == "__main__":
    main()
