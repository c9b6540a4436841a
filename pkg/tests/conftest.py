import re

import numpy as np
import pytest

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = re.search(r"criterion_(\d+)", item.name)
    if m is None or rep.when not in ("setup", "call"):
        return
    num = int(m.group(1))
    ok = _CRITERIA.get(num, True)
    if rep.when == "call" or rep.failed:
        _CRITERIA[num] = ok and rep.passed


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num in sorted(_CRITERIA):
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if _CRITERIA[num] else 'FAIL'}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
