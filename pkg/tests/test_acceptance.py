"""One test per acceptance criterion; each prints a pass/fail line with its margin.

The lines are also collected into the terminal summary of the pytest run.
"""

import json

import pytest

from conftest import ACCEPTANCE_LINES
from kac import cli
from kac.acceptance import CRITERIA, SUITES


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    result = CRITERIA[number]()
    line = result.line()
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert result.seconds <= result.budget, line
    assert result.passed, f"{line} details={result.details}"


def test_full_suite_covers_every_criterion():
    assert SUITES["full"] == sorted(CRITERIA)
    assert set(SUITES["fast"]) < set(SUITES["full"])
    assert 6 in SUITES["full"]


def test_verify_fast_reports_margins(capsys):
    code = cli.main(["verify", "fast"])
    verdict = json.loads(capsys.readouterr().out)
    assert code == 0 and verdict["passed"]
    assert [c["number"] for c in verdict["criteria"]] == SUITES["fast"]
    for c in verdict["criteria"]:
        assert isinstance(c["margin"], float) and c["margin"] > 0
