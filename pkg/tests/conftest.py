import json
from pathlib import Path

import pytest

GOLDEN_DIR = Path(__file__).parent / "golden"


class Golden:
    """Freeze-on-first-compute fixtures: the first run writes the file,
    later runs compare exactly."""

    def check(self, name: str, payload) -> None:
        path = GOLDEN_DIR / f"{name}.json"
        if not path.exists():
            GOLDEN_DIR.mkdir(exist_ok=True)
            path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
            return
        frozen = json.loads(path.read_text())
        assert payload == frozen, f"golden mismatch for {name}"


@pytest.fixture
def golden() -> Golden:
    return Golden()


_acceptance_reports: list = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        _acceptance_reports.append(report)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_reports:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for report in _acceptance_reports:
        name = report.nodeid.split("::")[-1]
        verdict = "PASS" if report.passed else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}")
