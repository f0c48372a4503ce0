import numpy as np
import pytest

from heavyuser.panel import PanelDataset

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS = {}


def make_panel(k, treated, control):
    """Panel from ``{user: {day: outcome}}`` dicts for each arm."""
    rows = []
    assignment = {}
    for arm, flag in ((treated, True), (control, False)):
        for user, days in arm.items():
            assignment[user] = flag
            rows.extend((user, d, y) for d, y in sorted(days.items()))
    return PanelDataset.from_rows(k, rows, assignment)


def full_activity_panel(k, treated_levels, control_levels):
    """Every user active every day with a day-constant outcome."""
    t = {f"t{i}": {d: y for d in range(1, k + 1)} for i, y in enumerate(treated_levels)}
    c = {f"c{i}": {d: y for d in range(1, k + 1)} for i, y in enumerate(control_levels)}
    return make_panel(k, t, c)


def naive_bruteforce(panel, days):
    """Naive estimate by direct summation over rows; ``days`` may repeat.

    Independent of the dense-matrix path used by the package.
    """
    days = list(days)
    mult = {d: days.count(d) for d in set(days)}
    sums = {True: 0.0, False: 0.0}
    appearing = {True: set(), False: set()}
    for u, d, y in panel.rows():
        if d in mult:
            z = bool(panel.assignment[u])
            sums[z] += mult[d] * y
            appearing[z].add(u)
    m = len(days)
    return sums[True] / (m * len(appearing[True])) - sums[False] / (m * len(appearing[False]))


@pytest.fixture
def hand_panel():
    # treated A:{d1:2}, B:{d1:1,d2:1}; control C:{d1:1}, D:{d1:1,d2:1}
    return make_panel(2, {"A": {1: 2.0}, "B": {1: 1.0, 2: 1.0}},
                      {"C": {1: 1.0}, "D": {1: 1.0, 2: 1.0}})


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[num]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {detail}")
