from __future__ import annotations

import sys

import pytest

from cangraph.detector import train
from cangraph.graph import build_graphs
from cangraph.synthetic import synthesize_traffic


@pytest.fixture(scope="session")
def clean_graphs():
    """1500 attack-free windows of the default synthetic vehicle (seed 42)."""
    return build_graphs(synthesize_traffic(1500 * 200, seed=42))


@pytest.fixture(scope="session")
def hypothesis(clean_graphs):
    return train(clean_graphs[:500], created_from="synthetic seed 42")


def pytest_terminal_summary(terminalreporter):
    """Print one PASS/FAIL/SKIP line per acceptance criterion."""
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.summary_lines():
        terminalreporter.write_line(line)
