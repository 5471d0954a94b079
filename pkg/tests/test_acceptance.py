"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run with ``pytest -s tests/test_acceptance.py`` to see the lines, or
``python tests/test_acceptance.py`` for the bare report.
"""

from __future__ import annotations

import sys
import tempfile
from pathlib import Path

import pytest

import criteria

RUNTIME_LIMITS = {1: 10.0, 2: 1.0, 7: 300.0, 9: 600.0}


def _report(outcome):
    print(outcome.line())
    limit = RUNTIME_LIMITS.get(outcome.number)
    assert outcome.passed, outcome.line()
    if limit is not None:
        assert outcome.seconds < limit, f"criterion {outcome.number} took {outcome.seconds:.1f}s (limit {limit:g}s)"


@pytest.mark.parametrize("number", range(1, 9))
def test_criterion(number):
    _report(getattr(criteria, f"criterion_{number}")())


def test_criterion_9(tmp_path):
    _report(criteria.criterion_9(tmp_path))


def main() -> int:
    failed = 0
    for n in range(1, 10):
        fn = getattr(criteria, f"criterion_{n}")
        out = fn(Path(tempfile.mkdtemp())) if n == 9 else fn()
        print(out.line(), flush=True)
        failed += not out.passed
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
