from pathlib import Path

import pytest
from hypothesis import settings

import mlbcd  # noqa: F401  (enables 64-bit JAX before any test builds arrays)

# JIT compilation makes first calls slow; deadlines would be noise.
settings.register_profile("default", deadline=None, max_examples=30)
settings.load_profile("default")

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def golden():
    return GOLDEN


_ACCEPTANCE = []


@pytest.fixture
def criterion(capsys):
    """``criterion(n, passed, detail)`` prints and records one PASS/FAIL line."""

    def record(n, passed, detail=""):
        line = f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}".rstrip()
        _ACCEPTANCE.append(line)
        with capsys.disabled():
            print("\n" + line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
