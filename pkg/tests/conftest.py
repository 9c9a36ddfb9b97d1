import math

import pytest

from cowsim.model import EveParams, ProtocolParams

# Lines recorded by the acceptance suite, echoed in the terminal summary.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def reference():
    return ProtocolParams()


@pytest.fixture
def ideal_usd1():
    return EveParams.with_epsilon(0.0, "usd1", bs_t=1.0, phi=0.0, delta=0.0, eta_e=1.0, pd_e=0.0)


@pytest.fixture
def dark_free(reference):
    return ProtocolParams(pd_data=0.0, pd_m1=0.0, pd_m2=0.0)


def close(a, b, rel=1e-12, abs_=0.0):
    return math.isclose(a, b, rel_tol=rel, abs_tol=abs_)
