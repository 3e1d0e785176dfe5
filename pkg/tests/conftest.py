import numpy as np
import pytest

from partialmatch.ttests import PartiallyMatchedDataset


@pytest.fixture
def hand_ds():
    """pre 1..5, post 2,3,3,5,6; the first four positions are linked."""
    return PartiallyMatchedDataset.from_arrays([1, 2, 3, 4, 5], [2, 3, 3, 5, 6], 4)


def random_dataset(rng, n=30, m=12, rho=0.5, delta=0.0):
    z = rng.standard_normal((n, 2))
    x = delta + z[:, 0]
    y = rho * z[:, 0] + np.sqrt(1 - rho * rho) * z[:, 1]
    return PartiallyMatchedDataset.from_arrays(x, y, m)


# -- acceptance report ----------------------------------------------------------

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(k, title): acceptance criterion k")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when != "call":
        return
    k, title = mark.args
    prev = _ACCEPTANCE.get(k, (title, True, []))
    notes = prev[2] + list(getattr(item, "acceptance_notes", []))
    _ACCEPTANCE[k] = (title, prev[1] and report.passed, notes)


@pytest.fixture
def notes(request):
    """Lines appended here are printed under the criterion's summary line."""
    request.node.acceptance_notes = []
    return request.node.acceptance_notes


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        title, ok, lines = _ACCEPTANCE[k]
        tr.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {title}")
        for line in lines:
            tr.write_line(f"    {line}")
