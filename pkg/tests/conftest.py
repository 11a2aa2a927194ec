"""Shared fixtures plus the acceptance-criteria terminal summary.

Tests named ``test_criterion_NN_*`` (all in test_acceptance.py) get one
PASS/FAIL line each at the end of the run so the eleven acceptance checks
can be read off without scanning the full pytest output.
"""

from __future__ import annotations

import re
import zlib

import numpy as np
import pytest

ACCEPTANCE_TITLES = {
    1: "gaussian oracle, single shot",
    2: "gaussian oracle, composed k=100",
    3: "laplace pure-DP delta",
    4: "FFT vs direct convolution",
    5: "error-bound formulas vs multiprecision",
    6: "dimension independence of the loss",
    7: "sigma-solver round trip",
    8: "tail weights of equivalent noises",
    9: "hardmax utility simulation",
    10: "noisy-SGD smoke train",
    11: "distribution core invariants",
}

_CRITERION_RE = re.compile(r"test_criterion_(\d{2})")
_results: dict[int, str] = {}
_notes: dict[int, str] = {}


def record_note(criterion: int, text: str) -> None:
    """Attach a short free-form note to a criterion's summary line."""
    _notes[criterion] = text


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    match = _CRITERION_RE.search(item.name)
    if match is None:
        return
    num = int(match.group(1))
    if report.outcome == "failed":
        _results[num] = "FAIL"
    elif report.when == "setup" and report.outcome == "skipped":
        _results.setdefault(num, "SKIP")
    elif report.when == "call" and report.outcome == "passed":
        _results.setdefault(num, "PASS")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num in sorted(ACCEPTANCE_TITLES):
        status = _results.get(num, "NOT RUN")
        line = f"criterion {num:2d} [{status:4s}] {ACCEPTANCE_TITLES[num]}"
        if num in _notes:
            line += f"  ({_notes[num]})"
        terminalreporter.write_line(line)


@pytest.fixture
def rng(request) -> np.random.Generator:
    """A generator seeded from the test's own name: stable, test-local."""
    return np.random.default_rng(zlib.crc32(request.node.nodeid.encode()))
