import math

import numpy as np
import pytest

from traj_embed import fixtures
from traj_embed.embedding import embed_process

P, G1, G2 = 0.25, 2.0, 1.0

# two-channel generator, closed form
H_EFF_TWO = np.diag([-1j * G1 / 2, -1j * G2 / 2])
J1_TWO = np.array([[math.sqrt(G1 * P), 0], [math.sqrt(G1 * (1 - P)), 0]])
J2_TWO = np.array([[0, math.sqrt(G2 * (1 - P))], [0, math.sqrt(G2 * P)]])

# three-state chain at unit rate
S3 = math.sqrt(3.0)
JX_THREE = np.array([[0, math.sqrt(2 / 3)], [0, 0]])
JY_THREE = np.array([[1, -1 / S3], [S3, -1]]) / (2 * math.sqrt(2))
JZ_THREE = np.array([[-1, -1 / S3], [S3, 1]]) / (2 * math.sqrt(2))


@pytest.fixture(scope="session")
def two_spec():
    return fixtures.two_channel()


@pytest.fixture(scope="session")
def three_spec():
    return fixtures.three_state()


@pytest.fixture(scope="session")
def two_embedding(two_spec):
    return embed_process(two_spec)


@pytest.fixture(scope="session")
def two_lb(two_embedding):
    return two_embedding[0]


@pytest.fixture(scope="session")
def three_lb(three_spec):
    return embed_process(three_spec, rate=1.0)[0]


@pytest.fixture(scope="session")
def poisson_lb():
    return embed_process(fixtures.poisson(1.0))[0]


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
