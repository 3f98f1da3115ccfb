import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from dwmap.model import Graph  # noqa: E402

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def two_node_graph() -> Graph:
    """phi_a=[1,0], phi_b=[0,2], zero pairwise table."""
    return Graph((2, 2), ((0, 1),), (np.array([1.0, 0.0]), np.array([0.0, 2.0])), (np.zeros((2, 2)),))


def chain_graph(phi_b=(0.0, 0.0), phi_ab=None) -> Graph:
    phi_ab = np.zeros((2, 2)) if phi_ab is None else np.asarray(phi_ab, float)
    return Graph(
        (2, 2, 2),
        ((0, 1), (1, 2)),
        (np.zeros(2), np.asarray(phi_b, float), np.zeros(2)),
        (phi_ab, np.zeros((2, 2))),
    )


@pytest.fixture
def two_node():
    return two_node_graph()


@pytest.fixture
def chain3():
    return chain_graph()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'} | {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
