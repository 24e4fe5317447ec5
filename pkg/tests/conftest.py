import numpy as np
import pytest
from hypothesis import settings

from degenlab.family import FamilyParams, HenonBase, QuadPoly2

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def random_params(rng, t=None, scale=1.0):
    """Random family member with g_zz != 0 and nontrivial h."""
    def cx(s=scale):
        return complex(*rng.normal(0, s, 2))

    g = QuadPoly2(*(cx() for _ in range(6)))
    if abs(g.a20) < 0.1:
        g = QuadPoly2(1.0, *g.coefficients[1:])
    h = QuadPoly2(*(cx() for _ in range(6)))
    c = cx()
    if abs(c) < 0.1:
        c = 0.5
    t = cx(0.1) if t is None else t
    return FamilyParams(HenonBase(c, cx(), cx()), t, g, h)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def ref_params():
    return FamilyParams.reference(c=0.5, G=1.0, H=0.0, t=1e-4)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
