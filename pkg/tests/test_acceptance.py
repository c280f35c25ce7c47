"""The twelve acceptance criteria at their stated tolerances.

Each test prints one PASS/FAIL line; the lines are also collected into a
terminal summary section. `python3 tests/test_acceptance.py` prints them alone.
"""
import sys

import pytest

from curvewave import acceptance


@pytest.mark.parametrize("number", sorted(acceptance.CHECKS))
def test_criterion(number, acceptance_log):
    res = acceptance.CHECKS[number]()
    print(res.line())
    acceptance_log.append(res.line())
    assert res.number == number
    assert res.passed, res.line()


if __name__ == "__main__":
    results = acceptance.run(echo=print)
    sys.exit(0 if all(r.passed for r in results) else 1)
