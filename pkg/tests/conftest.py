import sys

import pytest

from replica_reweight.eos import ProblemParams
from replica_reweight.losses import LossSpec

CE = LossSpec("ce_logistic")


def make_params(alpha=20.0, r_plus=0.5, sigma_plus=0.6, sigma_minus=0.6, s_plus=0.5, b=0.0, loss=CE):
    return ProblemParams(alpha, r_plus, sigma_plus, sigma_minus, s_plus, b, loss)


@pytest.fixture
def params():
    return make_params


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
