import csv
import dataclasses
import importlib.util
import io
import json
from pathlib import Path

import numpy as np
import pytest

from sprayctl.cli import main
from sprayctl.errors import ValidationError
from sprayctl.kinematics import demo_chain_path, forward_kinematics
from sprayctl.scenario import (
    CONTINUOUS,
    SELECTIVE,
    HeightConstraint,
    PiecewiseLinear,
    load_scenario,
    run_continuous,
    run_random_batch,
    run_selective,
    scenario_from_dict,
    shipped_scenarios,
)
from sprayctl.trace import Trace, TraceIOError, csv_header, emit_trace, trace_from_json, trace_to_csv, trace_to_json

ROOT = Path(__file__).resolve().parents[1]
GOLDEN = ROOT / "tests" / "golden"


def _load_golden_script():
    spec = importlib.util.spec_from_file_location("make_goldens", ROOT / "scripts" / "make_goldens.py")
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def _scenario_json(name: str) -> dict:
    return json.loads(shipped_scenarios()[name].read_text())


@pytest.fixture(scope="module")
def traces():
    return {name: run_continuous(load_scenario(shipped_scenarios()[name]))
            for name in ("spray_slow", "spray_slow_height", "spray_fast")}


# --- loading ------------------------------------------------------------------------


def test_all_shipped_scenarios_load():
    names = set(shipped_scenarios())
    assert names == {"spray_slow", "spray_slow_height", "spray_fast",
                     "selective_example1", "selective_example2", "selective_example3"}
    for name, path in shipped_scenarios().items():
        scenario = load_scenario(path)
        assert scenario.mode == (CONTINUOUS if name.startswith("spray") else SELECTIVE)
        assert scenario.chain.dof == 6


def test_example_stacks_have_three_priorities():
    for k in (1, 2, 3):
        scenario = load_scenario(shipped_scenarios()[f"selective_example{k}"])
        assert [t.priority for t in scenario.tasks] == [1, 2, 3]
        assert [t.kind.value for t in scenario.tasks] == ["frame_position", "frame_approach_axis", "frame_position"]
        assert [t.frame for t in scenario.tasks] == ["spray", "spray", "elbow"]


def test_json_syntax_error_reports_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "mode": "selective_ik",\n  "tasks": [\n}\n')
    with pytest.raises(ValidationError) as info:
        load_scenario(path)
    assert f"{path}:4:" in str(info.value)


def test_empty_task_list_rejected():
    data = _scenario_json("selective_example1")
    data["tasks"] = []
    with pytest.raises(ValidationError, match="non-empty"):
        scenario_from_dict(data)


@pytest.mark.parametrize("edit, message", [
    (lambda d: d.pop("mode"), "mode"),
    (lambda d: d.update(mode="teleport"), "unknown mode"),
    (lambda d: d.update(ptsc_mode={"type": "four_level"}), "ptsc_mode"),
    (lambda d: d.update(desired_axis=[0, 2, 0]), "unit"),
    (lambda d: d.update(dt=0.0), "dt"),
    (lambda d: d.update(duration=20.0), "cover"),
    (lambda d: d.update(initial_q=[0, 0, 0]), ""),
    (lambda d: d.update(height_constraint={"frame": "nozzle"}), "z_min"),
    (lambda d: d.update(frame="tool0"), "tool0"),
])
def test_continuous_validation(edit, message):
    data = _scenario_json("spray_slow")
    edit(data)
    with pytest.raises((ValidationError, KeyError)) as info:
        scenario_from_dict(data, "case.json")
    assert message in str(info.value)


def test_piecewise_linear_profile():
    f = PiecewiseLinear(np.array([0.0, 1.0, 3.0]), np.array([[0, 0, 0], [0, 0, 1], [0, 0, 1]]))
    np.testing.assert_allclose(f(0.5), [0, 0, 0.5])
    np.testing.assert_allclose(f(2.0), [0, 0, 1])
    np.testing.assert_allclose(f(-1.0), [0, 0, 0])
    np.testing.assert_allclose(f(9.0), [0, 0, 1])
    with pytest.raises(ValueError):
        PiecewiseLinear(np.array([0.0, 0.0]), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        PiecewiseLinear(np.array([0.0, 1.0]), np.zeros((3, 3)))


def test_shipped_speeds():
    slow = load_scenario(shipped_scenarios()["spray_slow"]).velocity_profile
    fast = load_scenario(shipped_scenarios()["spray_fast"]).velocity_profile
    assert np.max(np.linalg.norm(slow.values, axis=1)) == pytest.approx(0.2)
    assert np.max(np.linalg.norm(fast.values, axis=1)) == pytest.approx(0.8)


def test_mode_mismatch_raises():
    with pytest.raises(ValueError):
        run_continuous(load_scenario(shipped_scenarios()["selective_example1"]))
    with pytest.raises(ValueError):
        run_selective(load_scenario(shipped_scenarios()["spray_slow"]))


# --- closed-loop traces -------------------------------------------------------------


@pytest.mark.parametrize("name", ["spray_slow", "spray_slow_height", "spray_fast"])
def test_trace_invariants(traces, name):
    scenario = load_scenario(shipped_scenarios()[name])
    trace = traces[name]
    chain = scenario.chain
    dt = scenario.dt
    assert trace.status == "ok"
    assert len(trace) == int(round(scenario.duration / dt)) + 1
    t = trace.column("t")
    assert t[0] == 0.0 and t[-1] == pytest.approx(scenario.duration)
    assert np.all(np.diff(t) > 0)
    q, qd = trace.column("q"), trace.column("qd")
    vlo, vhi = chain.limit_arrays("vel")
    alo, ahi = chain.limit_arrays("acc")
    plo, phi = chain.limit_arrays("pos")
    assert np.all(qd >= vlo) and np.all(qd <= vhi)
    acc = np.diff(np.vstack([np.zeros(chain.dof), qd]), axis=0) / dt
    assert np.all(acc >= alo - 1e-9) and np.all(acc <= ahi + 1e-9)
    assert np.all(q >= plo - 1e-9) and np.all(q <= phi + 1e-9)
    # explicit Euler between rows
    np.testing.assert_allclose(q[1:], q[:-1] + qd[:-1] * dt, atol=1e-12)
    for row in trace.rows[::97]:
        pose = forward_kinematics(chain, row.q, "spray")
        np.testing.assert_allclose(row.spray_pos, pose.position, atol=1e-12)
        np.testing.assert_allclose(row.spray_axis, pose.matrix[:, 2], atol=1e-12)


@pytest.mark.parametrize("name", ["spray_slow", "spray_fast"])
def test_bound_mask_matches_velocities(traces, name):
    scenario = load_scenario(shipped_scenarios()[name])
    vlo, vhi = scenario.chain.limit_arrays("vel")
    for row in traces[name].rows:
        for j in range(scenario.chain.dof):
            if row.active_bounds >> j & 1:
                continue
            # joints not flagged are strictly inside their velocity limits
            assert vlo[j] + 1e-9 < row.qd[j] < vhi[j] - 1e-9


def test_height_floor_respected(traces):
    scenario = load_scenario(shipped_scenarios()["spray_slow_height"])
    hc = scenario.height_constraint
    z = np.array([forward_kinematics(scenario.chain, row.q, hc.frame).position[2] for row in traces["spray_slow_height"]])
    assert z.min() >= hc.z_min - 1e-3
    flags = np.array([row.height_flag for row in traces["spray_slow_height"]])
    assert flags.any()
    assert not any(row.height_flag for row in traces["spray_slow"])


def test_infeasible_constraints_truncate_trace():
    scenario = load_scenario(shipped_scenarios()["spray_slow"])
    scenario = dataclasses.replace(scenario, height_constraint=HeightConstraint(z_min=5.0), duration=0.1)
    trace = run_continuous(scenario)
    assert len(trace) == 0
    assert trace.status.startswith("infeasible at t=0")


# --- trace files ----------------------------------------------------------------------


def test_csv_layout(traces):
    trace = traces["spray_fast"]
    text = trace_to_csv(trace)
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == csv_header(6)
    assert len(rows) == len(trace) + 1
    assert all(len(r) == len(rows[0]) for r in rows)
    assert rows[0][-5:] == ["res1", "res2", "res3", "bounds", "height"]
    assert text.endswith("\n") and "\r" not in text


def test_empty_trace_is_header_only():
    assert trace_to_csv(Trace(dof=3)) == ",".join(csv_header(3)) + "\n"
    assert trace_from_json(trace_to_json(Trace(dof=3))).rows == []


def test_json_round_trip(traces):
    trace = traces["spray_slow_height"]
    back = trace_from_json(trace_to_json(trace))
    assert back.rows == trace.rows
    assert (back.dof, back.status, back.height_frame, back.z_min) == (6, "ok", "nozzle", 0.3)


def test_emit_trace(tmp_path, traces):
    trace = traces["spray_slow"]
    emit_trace(trace, "csv", tmp_path / "a.csv")
    emit_trace(trace, "json", tmp_path / "a.json")
    assert (tmp_path / "a.csv").read_text() == trace_to_csv(trace)
    assert trace_from_json((tmp_path / "a.json").read_text()).rows == trace.rows
    with pytest.raises(ValueError):
        emit_trace(trace, "xml", tmp_path / "a.xml")
    with pytest.raises(TraceIOError):
        emit_trace(trace, "csv", tmp_path / "missing" / "a.csv")


@pytest.mark.parametrize("name", sorted(shipped_scenarios()))
def test_matches_golden(name):
    text = _load_golden_script().golden_text(name)
    got = list(csv.reader(io.StringIO(text)))
    want = list(csv.reader(io.StringIO((GOLDEN / f"{name}.csv").read_text())))
    assert got[0] == want[0]
    assert len(got) == len(want)
    for a, b in zip(got[1:], want[1:]):
        for x, y in zip(a, b):
            try:
                fx, fy = float(x), float(y)
            except ValueError:
                assert x == y
                continue
            assert fx == pytest.approx(fy, rel=1e-6, abs=1e-9)


def test_repeated_runs_are_byte_identical():
    scenario = dataclasses.replace(load_scenario(shipped_scenarios()["spray_fast"]), duration=2.0)
    assert trace_to_csv(run_continuous(scenario)) == trace_to_csv(run_continuous(scenario))


def test_random_batch_summary():
    scenario = load_scenario(shipped_scenarios()["selective_example1"])
    summary = run_random_batch(scenario, count=5, seed=7)
    assert summary["count"] == 5 and len(summary["results"]) == 5
    assert summary["successes"] == sum(r["success"] for r in summary["results"])
    assert summary == run_random_batch(scenario, count=5, seed=7)


# --- command line -------------------------------------------------------------------


def test_cli_check(capsys):
    assert main(["check", str(demo_chain_path())]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["dof"] == 6
    assert info["reach"] == pytest.approx(1.35)
    assert {"spray", "nozzle", "elbow"} <= set(info["frames"])


def test_cli_spray_writes_trace_and_figure(tmp_path):
    scenario = _scenario_json("spray_slow")
    scenario["duration"] = 0.5
    scenario_path = tmp_path / "short.json"
    scenario_path.write_text(json.dumps(scenario))
    out = tmp_path / "trace.csv"
    assert main(["spray", str(scenario_path), "--out", str(out), "--debug-qp", str(tmp_path / "qps")]) == 0
    assert out.read_text().splitlines()[0] == ",".join(csv_header(6))
    assert len(out.read_text().splitlines()) == 52
    assert (tmp_path / "trace.png").stat().st_size > 0
    dumps = sorted((tmp_path / "qps").glob("qp_*.json"))
    assert len(dumps) >= 51
    assert "H" in json.loads(dumps[0].read_text())


def test_cli_spray_json_to_stdout(tmp_path, capsys):
    scenario = _scenario_json("spray_fast")
    scenario["duration"] = 0.1
    path = tmp_path / "s.json"
    path.write_text(json.dumps(scenario))
    assert main(["spray", str(path), "--format", "json"]) == 0
    assert len(trace_from_json(capsys.readouterr().out)) == 11


def test_cli_ik_outputs(tmp_path, capsys):
    out = tmp_path / "ik.json"
    assert main(["ik", "selective_example3", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["terminations"] == ["GradientStalled"]
    assert (tmp_path / "ik.png").exists()
    assert main(["ik", "selective_example1", "--format", "csv", "--no-plot"]) == 0
    assert capsys.readouterr().out.startswith("guess,termination,iterations,polished,err0")


def test_cli_batch(tmp_path):
    out = tmp_path / "batch.json"
    assert main(["ik", "selective_example1", "--batch", "4", "--seed", "3", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["count"] == 4 and doc["seed"] == 3


def test_cli_exit_codes(tmp_path):
    assert main(["spray", "selective_example1"]) == 1
    assert main(["ik", "spray_slow"]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["spray", str(bad)]) == 1
    assert main(["ik", "selective_example1", "--batch", "1", "--seed", "-1"]) == 1
    assert main(["spray", str(tmp_path / "nope.json")]) == 3
    assert main(["ik", "selective_example1", "--out", str(tmp_path / "no" / "dir.json")]) == 3
    data = _scenario_json("spray_slow")
    data["height_constraint"] = {"z_min": 5.0}
    data["duration"] = 0.1
    infeasible = tmp_path / "infeasible.json"
    infeasible.write_text(json.dumps(data))
    assert main(["spray", str(infeasible), "--no-plot", "--out", str(tmp_path / "t.csv")]) == 2
