import numpy as np
import pytest

from multisage.core import ActionKind, ActionLog, ActionRecord, PinStore, SECONDS_PER_DAY


def unit_rows(x):
    x = np.asarray(x, dtype=np.float64)
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def make_store(vectors, ids=None, quality=None) -> PinStore:
    vectors = np.asarray(vectors, dtype=np.float64)
    ids = np.arange(len(vectors)) if ids is None else ids
    return PinStore(ids, vectors, quality)


def make_log(user, pins, timestamps, kind=ActionKind.REPIN) -> ActionLog:
    return ActionLog.from_records(user, [ActionRecord(int(t), int(p), kind) for p, t in zip(pins, timestamps)])


DAY = SECONDS_PER_DAY


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance summary ---------------------------------------------------------
# tests marked ``criterion(n, title)`` report one PASS/FAIL line each at the end

_criteria: dict[int, tuple[str, bool, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (report.when != "call" and report.passed):
        return
    number, title = mark.args
    detail = next((v for k, v in item.user_properties if k == "detail"), "")
    ok = report.passed and _criteria.get(number, (title, True, ""))[1]
    _criteria[number] = (title, ok, detail if report.passed else str(report.longrepr).splitlines()[-1][:160])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, ok, detail = _criteria[number]
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
