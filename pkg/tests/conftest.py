import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

_CRITERIA: list[str] = []


@pytest.fixture(scope="session")
def bump21():
    from protmeas import CouplingSpec
    return CouplingSpec.bump(2, 1)


@pytest.fixture
def criterion(capsys):
    """Record one acceptance line: ``criterion(label, passed, detail)``."""
    def record(label: str, passed: bool, detail: str) -> bool:
        line = f"criterion {label}: {'PASS' if passed else 'FAIL'}  {detail}"
        _CRITERIA.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
