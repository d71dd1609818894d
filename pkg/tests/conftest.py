import pytest

from cropspray.config import load_config

ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture(scope="session")
def demo_cfg():
    return load_config("demo")


@pytest.fixture(scope="session")
def straight_cfg():
    return load_config("straight")


@pytest.fixture(scope="session")
def nees_cfg():
    return load_config("nees")


@pytest.fixture
def record_acceptance():
    def record(name: str, ok: bool, detail: str = "") -> None:
        ACCEPTANCE.append((name, bool(ok), detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}".rstrip())
