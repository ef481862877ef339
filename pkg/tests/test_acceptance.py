"""Acceptance suite: one pass/fail line per criterion.

Each test prints its result line directly to the terminal, so the lines show
up under plain `pytest` as well as with `-s`.
"""

import pytest

from clab.acceptance import CRITERIA, run_criterion


@pytest.mark.parametrize("number", range(1, len(CRITERIA) + 1))
def test_criterion(number, capsys):
    res = run_criterion(CRITERIA[number - 1])
    with capsys.disabled():
        print(f"\n{res.line()} ({res.seconds:.1f}s)")
    assert res.number == number
    assert res.passed, res.detail
