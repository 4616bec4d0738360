import pytest

from beta_dabp.blackbox import InProcessBlackBox, train_source_model
from beta_dabp.data import gaussian_shift_task, two_moons_task


@pytest.fixture(scope="session")
def moons():
    src, tgt = two_moons_task()
    return src, tgt, InProcessBlackBox(train_source_model(src))


@pytest.fixture(scope="session")
def gauss():
    src, tgt = gaussian_shift_task()
    return src, tgt, InProcessBlackBox(train_source_model(src))


CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one acceptance criterion's outcome and fail the test if it did not pass."""

    def record(n: int, title: str, ok: bool, detail: str = ""):
        CRITERIA[n] = f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
        assert ok, CRITERIA[n]

    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[n])
