import re
from collections import defaultdict

import numpy as np
import pytest

from condreg import finite_space as fs

_CRITERIA: dict[int, str] = {}
_OUTCOMES: dict[int, list] = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            n, title = m.args
            _CRITERIA[n] = title
            item.user_properties.append(("criterion", n))


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or report.outcome != "passed":
        _OUTCOMES[props["criterion"]].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        outs = _OUTCOMES.get(n, [])
        if not outs:
            status = "NOT RUN"
        elif all(o == "passed" for o in outs):
            status = "PASS"
        elif any(o == "failed" for o in outs):
            status = "FAIL"
        else:
            status = "SKIP"
        terminalreporter.write_line(f"[{status:>7}] criterion {n:2d}: {_CRITERIA[n]}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def remark3():
    return fs.load_fixture("remark3")


@pytest.fixture
def eq17():
    return fs.load_fixture("eq17")


@pytest.fixture
def omega4():
    return fs.load_fixture("omega4")


def slug(text: str) -> str:
    return re.sub(r"\W+", "_", text).strip("_")
