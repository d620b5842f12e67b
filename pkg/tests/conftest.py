import numpy as np
import pytest

from linrec.data import InteractionMatrix, SplitSpec, split
from linrec.synthetic import planted_blocks, random_binary

_acceptance_results = []


@pytest.fixture(scope="session")
def planted():
    return planted_blocks(200, 40, seed=42)


@pytest.fixture(scope="session")
def planted_split(planted):
    return split(planted, SplitSpec("strong", seed=42))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_random():
    return InteractionMatrix.from_dense(random_binary(10, 6, 0.4, seed=3))


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    label = dict(report.user_properties).get("acceptance")
    if label:
        _acceptance_results.append((label, report.outcome))


def pytest_runtest_setup(item):
    marker = item.get_closest_marker("acceptance")
    if marker:
        item.user_properties.append(("acceptance", marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for label, outcome in _acceptance_results:
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] {label}")
