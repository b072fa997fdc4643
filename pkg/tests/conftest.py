import numpy as np
import pytest

from delayrisk import heavy_tails as ht
from delayrisk import rare_sets as rs
from delayrisk.claim_models import ClaimVectorModel
from delayrisk.renewal import GeometricCount, RenewalSpec, Scenario, ZeroCount

P2 = ht.Pareto(2.0, 1.0)
POISSON1 = RenewalSpec(ht.Exponential(1.0))


def make_scenario(F=None, G=None, count=None, delay=None, renewal=POISSON1, r=0.05, A=None, regime="negligible",
                  name="test"):
    F = F or ClaimVectorModel((P2, P2))
    G = G or ClaimVectorModel((ht.Exponential(1.0),) * F.dim)
    A = A or rs.ComponentExceed((1.0,) * F.dim)
    return Scenario(F, G, count if count is not None else GeometricCount(0.5), delay or ht.Exponential(1.0),
                    renewal, r, A, regime, name)


@pytest.fixture
def scenario_ii():
    return make_scenario()


@pytest.fixture
def scenario_i():
    F = ClaimVectorModel((P2, P2))
    return make_scenario(F=F, G=F, regime="equivalent")


@pytest.fixture
def scenario_plain():
    return make_scenario(F=ClaimVectorModel((P2,)), count=ZeroCount(), A=rs.ComponentExceed((1.0,)))


# --------------------------------------------------------- acceptance summary

_ACCEPTANCE: dict = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    _ACCEPTANCE[number] = (passed, detail)


@pytest.fixture
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
