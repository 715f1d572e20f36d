"""Randomized pricing invariants shared by the unit and acceptance suites.

Draws stay inside regions where a fixed, generous grid is converged for every
engine, so the checks exercise the pricing identities rather than resolution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fpbench import (
    AvgParams,
    BatesParams,
    BsmParams,
    CarrMadanConfig,
    FourierGrid,
    MarketParams,
    PricingRequest,
    call_from_parity,
    check_avg_measure,
    price_attari,
    price_carr_madan,
    price_cos,
    put_from_parity,
)

GRID = FourierGrid(2000.0, 1 << 15)
# Wide enough for the fattest Bates tails drawn below, narrow enough that the
# exp(b) factor in the call series does not amplify roundoff.
COS_L, COS_N = 20.0, 8192
AGREEMENT = 1e-7
BOUND_TOL = 1e-9


@dataclass(frozen=True)
class Draw:
    model: object
    market: MarketParams
    t: float
    strikes: tuple[float, ...]


MODEL_KINDS = ("bsm", "bates", "avg")


def random_model(rng: np.random.Generator, kind: str):
    """A parameter draw inside the region where the fixed grids above are converged."""
    if kind == "bsm":
        return BsmParams(sigma=float(rng.uniform(0.1, 0.5)))
    if kind == "bates":
        return BatesParams(
            v0=float(rng.uniform(0.01, 0.1)), v_bar=float(rng.uniform(0.01, 0.1)), a=float(rng.uniform(1.0, 4.0)),
            eta=float(rng.uniform(0.1, 0.6)), rho=float(rng.uniform(-0.9, 0.0)),
            lam=float(rng.uniform(0.0, 0.5)), mu_j=float(rng.uniform(-0.2, 0.1)), nu_j=float(rng.uniform(0.05, 0.2)),
        )
    while True:
        model = AvgParams(
            sigma=float(rng.uniform(0.1, 0.4)), nu=float(rng.uniform(0.05, 0.3)),
            theta=float(rng.uniform(-0.3, 0.1)),
        )
        report = check_avg_measure(model)
        if report.measure_ok and report.alpha_max > 3.0:
            return model


def random_market(rng: np.random.Generator) -> MarketParams:
    return MarketParams(s0=float(rng.uniform(50, 150)), r=float(rng.uniform(0.0, 0.08)))


def random_draw(rng: np.random.Generator) -> Draw:
    model = random_model(rng, MODEL_KINDS[rng.integers(3)])
    market = random_market(rng)
    t = float(rng.uniform(0.25, 2.0))
    # A strictly increasing ladder with at least 2% spacing across the moneyness window.
    steps = rng.uniform(0.02, 0.15, size=8)
    strikes = market.s0 * (0.6 + np.cumsum(steps) - steps[0])
    strikes = strikes[strikes < 1.6 * market.s0]
    return Draw(model, market, t, tuple(float(k) for k in strikes))


def check_draw(draw: Draw) -> list[str]:
    """Return the list of violated invariants (empty when everything holds)."""
    problems = []
    req = PricingRequest(draw.t, draw.strikes)
    alpha = 1.5 if isinstance(draw.model, AvgParams) else None
    at = price_attari(draw.model, draw.market, req, GRID)
    cm = price_carr_madan(draw.model, draw.market, req, GRID, None if alpha is None else CarrMadanConfig(alpha))
    cos = price_cos(draw.model, draw.market, req, COS_L, COS_N)
    calls = at.calls
    k = np.asarray(draw.strikes)

    gap = max(np.max(np.abs(at.calls - cm.calls)), np.max(np.abs(at.calls - cos.calls)))
    if not gap <= AGREEMENT:
        problems.append(f"cross-method gap {gap:.2e}")
    for pv in (at, cm, cos):
        if np.any(pv.blowup(draw.market, BOUND_TOL)):
            problems.append(f"{pv.method} outside no-arbitrage bounds")
    if np.any(np.diff(calls) > BOUND_TOL):
        problems.append("call not non-increasing in strike")
    # Slope of the call in strike lies in [-e^{-rT}, 0].
    slopes = np.diff(calls) / np.diff(k)
    if np.any(slopes < -math.exp(-draw.market.r * draw.t) - 1e-7):
        problems.append("call slope below -exp(-rT)")
    puts = put_from_parity(at, draw.market)
    if np.any(puts.calls < -BOUND_TOL):
        problems.append("negative put from parity")
    if np.any(np.diff(puts.calls) < -BOUND_TOL):
        problems.append("put not non-decreasing in strike")
    back = call_from_parity(puts, draw.market)
    if not np.allclose(back.calls, at.calls, rtol=0, atol=1e-12):
        problems.append("parity round trip")
    if back.method != at.method:
        problems.append("parity round trip lost method tag")
    return problems
