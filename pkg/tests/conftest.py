from __future__ import annotations

import pytest

from tidal_mppt.config import trained_network
from tidal_mppt.hydro import TurbineConfig
from tidal_mppt.surrogate import AnnSettings

# one "PASS/FAIL criterion N: ..." line per acceptance criterion, echoed in the summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def default_network():
    """Surrogate trained with the default settings (about ten seconds, cached per session)."""
    return trained_network(TurbineConfig(), AnnSettings())


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
