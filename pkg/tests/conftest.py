from __future__ import annotations

import numpy as np
import pytest

from ucscreen.case_io import compute_ptdf
from ucscreen.cases import triangle, two_area_toy

TRIANGLE_LOAD = np.array([0.0, 0.0, 150.0])


@pytest.fixture
def tri():
    net = triangle()
    return net, compute_ptdf(net)


@pytest.fixture
def tri_tight():
    """Triangle with an 80 MW limit on the 1-3 line; the cheap unit is held back."""
    net = triangle(limits=(1000.0, 1000.0, 80.0))
    return net, compute_ptdf(net)


@pytest.fixture
def toy():
    net, areas = two_area_toy()
    return net, areas, compute_ptdf(net)


# acceptance summary: one line per criterion, echoed after the run
_ACCEPTANCE: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when != "call" and rep.passed:
        return
    number, title = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if rep.failed:
        _ACCEPTANCE[number] = f"[{number}] FAIL {title}" + (f": {detail}" if detail else "")
    elif rep.when == "call":
        _ACCEPTANCE[number] = f"[{number}] PASS {title}" + (f": {detail}" if detail else "")


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
