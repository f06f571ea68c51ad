"""Regenerate tests/golden/*.csv from the shipped scenarios.

Continuous scenarios are cut to their first second to keep the files small.
Run after an intentional numerical change and review the diff.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

from sprayctl.scenario import CONTINUOUS, load_scenario, run_continuous, run_selective, shipped_scenarios
from sprayctl.trace import reports_to_csv, trace_to_csv

GOLDEN = Path(__file__).resolve().parents[1] / "tests" / "golden"
GOLDEN_DURATION = 1.0


def golden_text(name: str) -> str:
    scenario = load_scenario(shipped_scenarios()[name])
    if scenario.mode == CONTINUOUS:
        return trace_to_csv(run_continuous(dataclasses.replace(scenario, duration=GOLDEN_DURATION)))
    return reports_to_csv(run_selective(scenario))


def main() -> None:
    GOLDEN.mkdir(parents=True, exist_ok=True)
    for name in shipped_scenarios():
        (GOLDEN / f"{name}.csv").write_text(golden_text(name))
        print("wrote", name)


if __name__ == "__main__":
    main()
