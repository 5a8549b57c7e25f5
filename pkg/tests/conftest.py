import logging

import pytest

# criterion number -> (passed, detail)
ACCEPTANCE: dict = {}


def record(number: int, title: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE[number] = (title, bool(passed), detail)


@pytest.fixture(autouse=True)
def _quiet_expected_warnings(caplog):
    # the stationarity warning is expected on corpora whose users average away from the chain's fixed point
    caplog.set_level(logging.ERROR, logger="semfake.mobility")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {title}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
