import re

import pytest

_details: dict[str, str] = {}
_outcomes: dict[str, tuple[str, str]] = {}
_NAME = re.compile(r"test_a(\d+)_(\w+)")


def _criterion(nodeid: str):
    match = _NAME.search(nodeid)
    if "test_acceptance" not in nodeid or not match:
        return None
    return f"A{int(match.group(1))}", match.group(2).replace("_", " ")


@pytest.fixture
def report(request):
    """Attach a one-line measurement to the acceptance summary."""
    key = _criterion(request.node.nodeid)

    def note(text: str) -> None:
        if key:
            _details[key[0]] = text

    return note


def pytest_runtest_logreport(report):
    key = _criterion(report.nodeid)
    if key is None:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        _outcomes[key[0]] = ("PASS" if report.passed else "FAIL", key[1])


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_outcomes, key=lambda c: int(c[1:])):
        status, title = _outcomes[cid]
        detail = _details.get(cid, "")
        terminalreporter.write_line(f"{cid:<4} {status}  {title}" + (f"  [{detail}]" if detail else ""))
