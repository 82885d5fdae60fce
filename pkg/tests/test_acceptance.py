"""Acceptance suite: every experiment preset at its default desk-scale settings.

Each check prints one PASS/FAIL line; the lines are also collected and repeated
in the terminal summary so they survive output capture.
"""

import pytest

from ricci_lab import experiments
from ricci_lab.config import EXPERIMENTS, from_mapping
from ricci_lab.io import read_csv, read_json

ACCEPTANCE_LINES: list[str] = []


@pytest.mark.slow
@pytest.mark.parametrize("exp", EXPERIMENTS)
def test_acceptance(exp, tmp_path):
    cfg = from_mapping({"experiment": exp, "output_dir": str(tmp_path / exp)})
    res = experiments.run(cfg)
    for c in res.checks:
        line = f"{'PASS' if c.passed else 'FAIL'}  {exp}  {c.name}: {c.value:.6g} ({c.bound})"
        print(line)
        ACCEPTANCE_LINES.append(line)
    summary = read_json(tmp_path / exp / "summary.json")
    assert summary["passed"] == res.passed
    assert len(read_csv(tmp_path / exp / "checks.csv")) == len(res.checks) > 0
    failed = [c.name for c in res.checks if not c.passed]
    assert not failed, f"{exp} failed: {failed}"
