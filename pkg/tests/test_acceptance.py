"""The eleven acceptance criteria, one test each.

Every result line is printed (visible with ``-s``) and repeated in the
terminal summary, so a plain ``pytest -v`` run shows one PASS/FAIL line per
criterion.
"""
import pytest

from mmbm import acceptance
from mmbm.acceptance import CRITERIA


@pytest.fixture(scope="module", autouse=True)
def _fresh_pool():
    acceptance._SOLVED.clear()
    yield


@pytest.mark.parametrize("number", range(1, len(CRITERIA) + 1))
def test_criterion(number, criterion_log):
    result = CRITERIA[number - 1]()
    line = result.line()
    print(line)
    criterion_log(line)
    assert result.passed, line
