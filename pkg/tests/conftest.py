"""Shared fixtures: expensive self-verification on, acceptance criterion report."""
import pytest

from rgcomplex import homology, stabilization


@pytest.fixture(scope="session", autouse=True)
def verification_flags():
    homology.VERIFY_CHAIN = True
    stabilization.VERIFY_INCREMENTAL = True
    yield
    homology.VERIFY_CHAIN = False
    stabilization.VERIFY_INCREMENTAL = False


_CRITERIA: list[tuple[int, str, bool, str]] = []


@pytest.fixture(scope="session")
def criterion_report():
    def report(num: int, description: str, ok: bool, detail: str = ""):
        _CRITERIA.append((num, description, bool(ok), detail))
        assert ok, f"criterion {num} ({description}): {detail}"

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num, description, ok, detail in sorted(_CRITERIA):
        status = "PASS" if ok else "FAIL"
        line = f"[{status}] criterion {num}: {description}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
