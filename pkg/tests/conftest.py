"""Shared scenarios, golden values and frozen oracle values."""
from __future__ import annotations

import os
from dataclasses import dataclass

import pytest
from hypothesis import HealthCheck, settings

from fpbench import AvgParams, BatesParams, BsmParams, MarketParams

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@dataclass(frozen=True)
class Scenario:
    name: str
    model: object
    market: MarketParams
    strikes: tuple[float, ...]
    tenors: tuple[float, ...]
    # golden[(K, T)]: published ten-decimal values
    golden: dict
    # oracle[(K, T)]: values from the closed form (BSM, 40-digit arithmetic) or
    # from the Attari / Carr-Madan pair on fully converged grids, frozen here
    oracle: dict

    def options(self, tenors=None):
        return [(k, t) for t in (tenors or self.tenors) for k in self.strikes]


BSM = Scenario(
    "bsm",
    BsmParams(sigma=0.25),
    MarketParams(s0=50.0, r=0.05),
    (30.0, 50.0, 70.0),
    (1.0, 0.1),
    golden={
        (30.0, 1.0): 21.5036288308, (50.0, 1.0): 6.1679994652, (70.0, 1.0): 0.8986170065,
        (30.0, 0.1): 20.1496256242, (50.0, 0.1): 1.7004462835, (70.0, 0.1): 0.0000139309,
    },
    oracle={
        (30.0, 1.0): 21.50362883077027, (50.0, 1.0): 6.167999465184362, (70.0, 1.0): 0.8986170045094042,
        (30.0, 0.1): 20.14962562423479, (50.0, 0.1): 1.700446283475924, (70.0, 0.1): 1.393094593674728e-5,
    },
)

BATES = Scenario(
    "bates",
    BatesParams(v0=0.008836, v_bar=0.014, a=3.99, eta=0.27, rho=-0.79, lam=0.11, mu_j=-0.12, nu_j=0.15),
    MarketParams(s0=100.0, r=0.0319),
    (60.0, 100.0, 140.0),
    (1.0, 0.1),
    golden={
        # The (60, 1) cell is published as 441.9030506459, above S0; the oracle value is used instead.
        (60.0, 1.0): 41.9030506459, (100.0, 1.0): 6.7577754525, (140.0, 1.0): 0.0058803882,
        (60.0, 0.1): 40.1913714101, (100.0, 0.1): 1.4817911043, (140.0, 0.1): 0.0000688740,
    },
    oracle={
        (60.0, 1.0): 41.9030506459084, (100.0, 1.0): 6.7577754524926, (140.0, 1.0): 0.0058803881786,
        (60.0, 0.1): 40.1913715101151, (100.0, 0.1): 1.4817911048332, (140.0, 0.1): 0.0000688740859,
    },
)

AVG_TEST1 = Scenario(
    "avg_test1",
    AvgParams(sigma=0.12136, nu=0.3, theta=-0.1436),
    MarketParams(s0=100.0, r=0.1),
    (60.0, 101.0, 140.0),
    (1.0, 0.1),
    golden={
        (60.0, 1.0): 45.7164396686, (101.0, 1.0): 10.9815614276, (140.0, 1.0): 0.1019706457,
        (60.0, 0.1): 40.5972193355, (101.0, 0.1): 1.3938439616, (140.0, 0.1): 0.0000061410,
    },
    oracle={
        (60.0, 1.0): 45.7164396685726, (101.0, 1.0): 10.9815614275751, (140.0, 1.0): 0.1019706456589,
        (60.0, 0.1): 40.5972193355184, (101.0, 0.1): 1.3938439612183, (140.0, 0.1): 0.0000061409970,
    },
)

# Risk-neutral measure violated (1/nu < theta + sigma^2/2).
AVG_TABLE3 = Scenario(
    "avg_table3",
    AvgParams(sigma=1.0, nu=0.5, theta=2.0),
    MarketParams(s0=100.0, r=0.02),
    (60.0, 90.0, 140.0),
    (1.0, 0.1),
    golden={
        (60.0, 0.1): 51.053, (90.0, 0.1): 34.141, (140.0, 0.1): 14.595,
        (60.0, 1.0): 68.604, (90.0, 1.0): 54.609, (140.0, 1.0): 32.285,
    },
    oracle={},
)

# Valid measure with alpha_max = 1: the dampening-parameter study.
AVG_TEST3 = Scenario(
    "avg_test3",
    AvgParams(sigma=1.0, nu=0.2, theta=1.5),
    MarketParams(s0=100.0, r=0.02),
    (60.0, 90.0, 140.0),
    (1.0, 0.1),
    golden={(90.0, 1.0): 58.9490408593, (90.0, 0.1): 20.0293202541},
    oracle={
        (60.0, 1.0): 66.096512385559, (90.0, 1.0): 58.949040859318, (140.0, 1.0): 51.150967046983,
        (60.0, 0.1): 40.59003144615, (90.0, 0.1): 20.029320254128, (140.0, 0.1): 10.740586845097,
    },
)

SCENARIOS = {s.name: s for s in (BSM, BATES, AVG_TEST1, AVG_TABLE3, AVG_TEST3)}

# Acceptance verdicts, one line per criterion, echoed in the terminal summary.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])


@pytest.fixture(params=["bsm", "bates", "avg_test1"])
def valid_scenario(request):
    return SCENARIOS[request.param]
