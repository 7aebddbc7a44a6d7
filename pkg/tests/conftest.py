from fractions import Fraction

import pytest

from zoomctl.model import SchemeParams, SystemModel
from zoomctl.noise import ScaledBG


def reference_model():
    return SystemModel([[1.2]], [[1.0]], [[1.0]], ScaledBG(4.0, 2.0))


def reference_params(N=100):
    return SchemeParams(K=2, N=N, g=Fraction(4, 3), p=1, q_exp=3, L=9.0, beta=3.95, eps=0.95)


@pytest.fixture
def ref_model():
    return reference_model()


@pytest.fixture
def ref_params():
    return reference_params()


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
