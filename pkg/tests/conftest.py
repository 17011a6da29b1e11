import json
from collections import defaultdict
from pathlib import Path

import numpy as np
import pytest

ORACLE_PATH = Path(__file__).parent / "oracles" / "values.json"

_criteria: dict[int, dict] = defaultdict(lambda: {"title": "", "outcomes": []})


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion the test belongs to")


@pytest.fixture(scope="session")
def oracle() -> dict:
    return json.loads(ORACLE_PATH.read_text())


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        n, title = mark.args
        _criteria[n]["title"] = title
        _criteria[n]["outcomes"].append(rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        c = _criteria[n]
        status = "PASS" if c["outcomes"] and all(c["outcomes"]) else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d} {status}: {c['title']} ({sum(c['outcomes'])}/{len(c['outcomes'])} checks)")
