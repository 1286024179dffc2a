from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cogmem.clock import StepClock  # noqa: E402
from cogmem.config import Config  # noqa: E402
from cogmem.engine import Engine  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"


def make_config(data_dir, **overrides) -> Config:
    base = {
        "store__data_dir": str(data_dir),
        "store__fsync": False,
        "auth__credentials_file": str(FIXTURES / "credentials.tsv"),
        "knowledge__facts_file": str(FIXTURES / "facts.tsv"),
    }
    base.update(overrides)
    return Config().replace(**base)


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def config(tmp_path) -> Config:
    return make_config(tmp_path / "data")


@pytest.fixture
def engine(config):
    with Engine(config, clock=StepClock()) as eng:
        yield eng


def talk(engine, session: str, *lines: str):
    return [engine.converse(session, line) for line in lines]


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
