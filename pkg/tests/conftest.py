import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bbm_edge.engine import ALIVE, BRANCHED, GenealogyTree, simulate
from bbm_edge.kernels import OffspringLaw, RngStream

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture
def binary():
    return OffspringLaw.binary()


@pytest.fixture
def small_tree(binary):
    return simulate(4.0, binary, RngStream(11, 3))


@pytest.fixture
def forked_tree():
    """Root branches at 1.0; its left child branches again at 2.5; three leaves at t=4.

    Record layout: 0 root, 1 left child, 2 right child (leaf), 3 and 4 leaves under 1.
    Overlaps: Q(3, 4) = 2.5, Q(2, 3) = Q(2, 4) = 1.0.
    """
    return GenealogyTree.from_records(
        4.0,
        parent=[-1, 0, 0, 1, 1],
        birth_time=[0.0, 1.0, 1.0, 2.5, 2.5],
        death_time=[1.0, 2.5, 4.0, 4.0, 4.0],
        death_position=[0.4, 1.1, -0.7, 2.0, 0.9],
        status=[BRANCHED, BRANCHED, ALIVE, ALIVE, ALIVE],
    )


@pytest.fixture
def root_split_tree():
    """Root splits immediately (at time 1e-9): the two leaves are independent."""
    return GenealogyTree.from_records(
        2.0,
        parent=[-1, 0, 0],
        birth_time=[0.0, 1e-9, 1e-9],
        death_time=[1e-9, 2.0, 2.0],
        death_position=[0.0, 0.5, -0.5],
        status=[BRANCHED, ALIVE, ALIVE],
    )


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(RESULTS):
        passed, detail = RESULTS[criterion]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  criterion {criterion:2d}: {detail}")
