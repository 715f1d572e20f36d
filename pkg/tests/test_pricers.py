import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import AVG_TABLE3, AVG_TEST1, AVG_TEST3, BATES, BSM
from fpbench import (
    AlphaInfeasible,
    BsmParams,
    CarrMadanConfig,
    CosGrid,
    FftConfig,
    FourierGrid,
    InvalidParams,
    MarketParams,
    PricingRequest,
    call_from_parity,
    count_cf_evaluations,
    fft_sa_partition,
    no_arbitrage_bounds,
    price_attari,
    price_carr_madan,
    price_cos,
    price_dpd,
    price_dpd_vec,
    price_fft,
    price_fft_sa,
    put_from_parity,
)
from properties import check_draw, random_draw

# Converged grids per (scenario, tenor): quadrature domain, n, COS L, COS terms, CM alpha.
CONVERGED = {
    ("bsm", 1.0): (100.0, 512, 13.0, 64, None),
    ("bsm", 0.1): (100.0, 512, 13.0, 64, None),
    ("bates", 1.0): (1000.0, 8192, 30.0, 512, None),
    ("bates", 0.1): (1000.0, 8192, 30.0, 512, None),
    ("avg_test1", 1.0): (1000.0, 8192, 8.0, 512, 0.75),
}
SCEN = {"bsm": BSM, "bates": BATES, "avg_test1": AVG_TEST1}


def _engines(sc, t):
    domain, n, l_scale, n_cos, alpha = CONVERGED[(sc.name, t)]
    req = PricingRequest(t, sc.strikes)
    grid = FourierGrid(domain, n)
    cm_cfg = None if alpha is None else CarrMadanConfig(alpha)
    return {
        "dpd": price_dpd(sc.model, sc.market, req, grid),
        "dpd_opt": price_dpd_vec(sc.model, sc.market, req, grid),
        "at_opt": price_attari(sc.model, sc.market, req, grid),
        "cm_opt": price_carr_madan(sc.model, sc.market, req, grid, cm_cfg),
        "cos_opt": price_cos(sc.model, sc.market, req, l_scale, n_cos),
        "fft_sa": price_fft_sa(sc.model, sc.market, req, FftConfig(alpha or 1.75, n, domain)),
    }


@pytest.mark.parametrize("key", sorted(CONVERGED))
def test_engines_match_oracle_on_converged_grids(key):
    sc = SCEN[key[0]]
    t = key[1]
    expected = np.array([sc.oracle[(k, t)] for k in sc.strikes])
    for method, pv in _engines(sc, t).items():
        np.testing.assert_allclose(pv.calls, expected, rtol=0, atol=5e-12, err_msg=method)


def test_cos_short_tenor_avg_matches_oracle():
    req = PricingRequest(0.1, AVG_TEST1.strikes)
    pv = price_cos(AVG_TEST1.model, AVG_TEST1.market, req, 12.0, 1 << 17)
    expected = [AVG_TEST1.oracle[(k, 0.1)] for k in AVG_TEST1.strikes]
    np.testing.assert_allclose(pv.calls, expected, rtol=0, atol=1e-10)


def test_fft_atm_example():
    req = PricingRequest(1.0, (50.0,))
    pv = price_fft(BSM.model, BSM.market, req, FftConfig(1.75, 512, 100.0))
    assert not pv.interpolated[0]
    assert pv.calls[0] == pytest.approx(BSM.oracle[(50.0, 1.0)], abs=1e-12)


# ---------------------------------------------------------------- equivalences


@pytest.mark.parametrize("sc", [BSM, BATES, AVG_TEST1], ids=lambda s: s.name)
@pytest.mark.parametrize("t", [1.0, 0.1])
def test_vectorized_dpd_equals_scalar_dpd(sc, t):
    req = PricingRequest(t, sc.strikes)
    grid = FourierGrid(200.0, 1024)
    a = price_dpd(sc.model, sc.market, req, grid).calls
    b = price_dpd_vec(sc.model, sc.market, req, grid).calls
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


@pytest.mark.parametrize("n", [64, 512, 4096])
@pytest.mark.parametrize("sc", [BSM, BATES], ids=lambda s: s.name)
def test_fft_on_grid_equals_direct_carr_madan(sc, n):
    cfg = FftConfig(1.75, n, 80.0)
    req = PricingRequest(1.0, (sc.market.s0,))
    fft_pv = price_fft(sc.model, sc.market, req, cfg)
    cm_pv = price_carr_madan(sc.model, sc.market, req, cfg.quadrature_grid, CarrMadanConfig(1.75))
    assert not fft_pv.interpolated.any()
    assert abs(fft_pv.calls[0] - cm_pv.calls[0]) < 1e-12


def test_fft_sa_equals_direct_carr_madan_off_grid():
    cfg = FftConfig(1.75, 1024, 200.0)
    req = PricingRequest(1.0, (37.0, 50.0, 61.3, 66.6))
    sa = price_fft_sa(BSM.model, BSM.market, req, cfg)
    cm = price_carr_madan(BSM.model, BSM.market, req, cfg.quadrature_grid, CarrMadanConfig(1.75))
    np.testing.assert_allclose(sa.calls, cm.calls, rtol=0, atol=1e-12)


def test_fft_interpolation_flags_and_error():
    cfg = FftConfig(1.75, 4096, 400.0)
    req = PricingRequest(1.0, (42.0, 50.0, 58.0))
    pv = price_fft(BSM.model, BSM.market, req, cfg)
    assert pv.interpolated.tolist() == [True, False, True]
    exact = price_fft_sa(BSM.model, BSM.market, req, cfg).calls
    err = np.abs(pv.calls - exact)
    assert err[1] < 1e-12
    # Linear interpolation in (ln K, ln C) leaves an O(dk^2) error off the grid.
    assert 0 < err.max() < 50.0 * cfg.dk**2


def test_fft_rejects_strikes_outside_window():
    cfg = FftConfig(1.75, 16, 100.0)  # k_max = 16 pi / 100 ~ 0.5
    with pytest.raises(InvalidParams, match="window"):
        price_fft(BSM.model, BSM.market, PricingRequest(1.0, (200.0,)), cfg)


def test_fft_config_geometry():
    cfg = FftConfig(1.5, 4096, 1024.0)
    assert cfg.dw == 0.25
    assert cfg.dk * cfg.dw * cfg.n == pytest.approx(2 * math.pi)
    assert cfg.k_max == pytest.approx(cfg.n * cfg.dk / 2)
    again = FftConfig.from_kmax(1.5, cfg.k_max, 4096)
    assert again.w_max == pytest.approx(cfg.w_max)
    assert cfg.quadrature_grid.n == 4095 and cfg.quadrature_grid.dw == pytest.approx(cfg.dw)


@pytest.mark.parametrize("kwargs", [dict(alpha=0.0, n=8, w_max=1.0), dict(alpha=1.0, n=12, w_max=1.0),
                                    dict(alpha=1.0, n=8, w_max=-1.0), dict(alpha=math.nan, n=8, w_max=1.0)])
def test_fft_config_validation(kwargs):
    with pytest.raises(InvalidParams):
        FftConfig(**kwargs)


def test_fft_sa_partition_covers_every_strike_once():
    dk = 0.01
    lnk = np.array([0.0, 0.05, 0.003, 0.053, 0.5, -0.2])
    runs = fft_sa_partition(lnk, dk, 64)
    members = sorted(i for _, idx in runs for i in idx)
    assert members == list(range(lnk.size))
    for anchor, idx in runs:
        steps = (lnk[idx] - anchor) / dk
        np.testing.assert_allclose(steps, np.rint(steps), atol=1e-9)
        assert np.all(np.abs(steps) <= 32)
    # {-0.2, 0, 0.05}, {0.003, 0.053}, {0.5}: 0.5 is 70 steps from -0.2, outside a 64-wide window.
    assert len(runs) == 3


def test_fft_sa_single_run_for_on_grid_strikes():
    cfg = FftConfig(1.75, 256, 100.0)
    lnk = math.log(50.0) + cfg.dk * np.array([-3, 0, 5])
    pv = price_fft_sa(BSM.model, BSM.market, PricingRequest(1.0, tuple(np.exp(lnk))), cfg)
    assert pv.grid_used[1] == 1


# ---------------------------------------------------------------- batches and duplicates


@pytest.mark.parametrize("engine", ["dpd", "dpd_opt", "at_opt", "cm_opt", "cos_opt"])
def test_batch_equals_single_strike_pricing(engine):
    strikes = (35.0, 48.5, 50.0, 63.0)
    grid = FourierGrid(100.0, 512)
    fn = {
        "dpd": lambda r: price_dpd(BSM.model, BSM.market, r, grid),
        "dpd_opt": lambda r: price_dpd_vec(BSM.model, BSM.market, r, grid),
        "at_opt": lambda r: price_attari(BSM.model, BSM.market, r, grid),
        "cm_opt": lambda r: price_carr_madan(BSM.model, BSM.market, r, grid),
        "cos_opt": lambda r: price_cos(BSM.model, BSM.market, r, 13.0, 64),
    }[engine]
    batch = fn(PricingRequest(1.0, strikes)).calls
    single = [fn(PricingRequest(1.0, (k,))).calls[0] for k in strikes]
    np.testing.assert_allclose(batch, single, rtol=0, atol=1e-13)


def test_duplicate_strikes_are_priced_identically():
    req = PricingRequest(1.0, (50.0, 30.0, 50.0))
    for pv in (price_attari(BSM.model, BSM.market, req, FourierGrid(100.0, 256)),
               price_cos(BSM.model, BSM.market, req, 13.0, 64)):
        assert len(pv) == 3
        assert pv.calls[0] == pv.calls[2]
        np.testing.assert_array_equal(pv.strikes, [50.0, 30.0, 50.0])


# ---------------------------------------------------------------- characteristic-function budgets


@pytest.mark.parametrize("n", [64, 256])
def test_cf_evaluation_counts(n):
    strikes = (30.0, 50.0, 70.0)
    m = len(strikes)
    req = PricingRequest(1.0, strikes)
    grid = FourierGrid(100.0, n)

    def count(fn):
        with count_cf_evaluations() as c:
            fn()
        return c[0]

    assert count(lambda: price_dpd(BSM.model, BSM.market, req, grid)) == 3 * (n + 1) * m
    assert count(lambda: price_dpd_vec(BSM.model, BSM.market, req, grid)) == 2 * n + 4
    assert count(lambda: price_attari(BSM.model, BSM.market, req, grid)) == n + 1
    assert count(lambda: price_carr_madan(BSM.model, BSM.market, req, grid)) == n + 1
    assert count(lambda: price_fft(BSM.model, BSM.market, PricingRequest(1.0, (50.0,)),
                                   FftConfig(1.75, n, 100.0))) == n
    assert count(lambda: price_cos(BSM.model, BSM.market, req, 13.0, n)) == n
    # Bates cumulants come from finite differences of the log characteristic function.
    assert count(lambda: price_cos(BATES.model, BATES.market, req, 30.0, n)) == n + 18


def test_cf_count_independent_of_batch_size_for_vectorized_engines():
    grid = FourierGrid(100.0, 128)
    counts = []
    for m in (1, 10, 100):
        req = PricingRequest(1.0, tuple(np.linspace(30, 70, m)))
        with count_cf_evaluations() as c:
            price_attari(BSM.model, BSM.market, req, grid)
        counts.append(c[0])
    assert counts == [129, 129, 129]


# ---------------------------------------------------------------- dampening parameter


def test_carr_madan_rejects_infeasible_alpha():
    req = PricingRequest(1.0, (90.0,))
    with pytest.raises(AlphaInfeasible) as exc:
        price_carr_madan(AVG_TEST3.model, AVG_TEST3.market, req, FourierGrid(100.0, 64), CarrMadanConfig(1.75))
    assert "alpha_max=1.0" in str(exc.value)
    with pytest.raises(AlphaInfeasible):
        price_fft(AVG_TEST3.model, AVG_TEST3.market, req, FftConfig(1.75, 64, 100.0))


def test_avg_requires_explicit_alpha():
    with pytest.raises(AlphaInfeasible, match="explicit alpha"):
        price_carr_madan(AVG_TEST1.model, AVG_TEST1.market, PricingRequest(1.0, (100.0,)), FourierGrid(100.0, 64))


def test_enforce_alpha_false_prices_anyway():
    req = PricingRequest(1.0, (90.0,))
    pv = price_carr_madan(AVG_TEST3.model, AVG_TEST3.market, req, FourierGrid(100.0, 64),
                          CarrMadanConfig(1.75), enforce_alpha=False)
    assert pv.calls.shape == (1,)


def test_default_alpha_for_bsm_and_bates():
    req = PricingRequest(1.0, (50.0,))
    a = price_carr_madan(BSM.model, BSM.market, req, FourierGrid(100.0, 512)).calls
    b = price_carr_madan(BSM.model, BSM.market, req, FourierGrid(100.0, 512), CarrMadanConfig(1.75)).calls
    assert a[0] == b[0]


# ---------------------------------------------------------------- blow-up flags


def test_blowup_flags_bound_violations():
    pv = price_attari(BSM.model, BSM.market, PricingRequest(1.0, BSM.strikes), FourierGrid(100.0, 512))
    assert not pv.blowup(BSM.market).any()
    bad = type(pv)(strikes=pv.strikes, t=1.0, calls=np.array([-1.0, 60.0, math.nan]), method="x", grid_used=None)
    assert bad.blowup(BSM.market).tolist() == [True, True, True]


def test_cos_blows_up_when_measure_is_invalid():
    pv = price_cos(AVG_TABLE3.model, AVG_TABLE3.market, PricingRequest(1.0, AVG_TABLE3.strikes), 12.0, 256)
    assert pv.blowup(AVG_TABLE3.market).all()


def test_no_arbitrage_bounds():
    market = MarketParams(100.0, 0.05)
    lo, hi = no_arbitrage_bounds(market, [50.0, 200.0], 1.0)
    assert lo[0] == pytest.approx(100 - 50 * math.exp(-0.05))
    assert lo[1] == 0.0 and hi.tolist() == [100.0, 100.0]


# ---------------------------------------------------------------- requests and COS edges


@pytest.mark.parametrize("t, strikes", [(0.0, (1.0,)), (-1.0, (1.0,)), (1.0, ()), (1.0, (0.0,)), (1.0, (math.inf,))])
def test_invalid_requests(t, strikes):
    with pytest.raises(InvalidParams):
        PricingRequest(t, strikes)


@pytest.mark.parametrize("l_scale, n_terms", [(0.0, 64), (-1.0, 64), (13.0, 1), (13.0, 10.5)])
def test_cos_rejects_bad_truncation(l_scale, n_terms):
    with pytest.raises(InvalidParams):
        price_cos(BSM.model, BSM.market, PricingRequest(1.0, (50.0,)), l_scale, n_terms)


def test_cos_far_strikes_are_clamped_to_bounds():
    # Deep ITM strike: the interval lies above ln K, price -> S0 - K e^{-rT}.
    # Deep OTM strike: the interval lies below ln K, price -> 0.
    req = PricingRequest(1.0, (0.001, 1e6))
    pv = price_cos(BSM.model, BSM.market, req, 13.0, 64)
    assert pv.calls[0] == pytest.approx(50.0 - 0.001 * math.exp(-0.05), abs=1e-9)
    assert pv.calls[1] == 0.0
    assert isinstance(pv.grid_used, CosGrid) and pv.grid_used.n_terms == 64


def test_cos_interval_width_is_strike_free():
    pv = price_cos(BATES.model, BATES.market, PricingRequest(1.0, BATES.strikes), 30.0, 128)
    widths = pv.grid_used.b - pv.grid_used.a
    np.testing.assert_allclose(widths, widths[0], rtol=1e-14)


# ---------------------------------------------------------------- parity and monotonicity


def test_parity_round_trip():
    pv = price_cos(BATES.model, BATES.market, PricingRequest(0.5, (80.0, 100.0, 120.0)), 30.0, 256)
    put = put_from_parity(pv, BATES.market)
    assert put.method == "cos_opt:put"
    back = call_from_parity(put, BATES.market)
    np.testing.assert_allclose(back.calls, pv.calls, rtol=0, atol=1e-12)
    assert back.method == "cos_opt"


@settings(max_examples=25)
@given(
    sigma=st.floats(0.05, 0.8),
    r=st.floats(0.0, 0.1),
    t=st.floats(0.1, 3.0),
    k=st.floats(20.0, 200.0),
)
def test_bsm_prices_within_bounds_and_monotone(sigma, r, t, k):
    market = MarketParams(100.0, r)
    strikes = (k, k * 1.05)
    pv = price_cos(BsmParams(sigma), market, PricingRequest(t, strikes), 13.0, 256)
    assert not pv.blowup(market, 1e-9).any()
    assert pv.calls[1] <= pv.calls[0] + 1e-10


@settings(max_examples=15)
@given(seed=st.integers(0, 2**32 - 1))
def test_random_draw_invariants(seed):
    assert check_draw(random_draw(np.random.default_rng(seed))) == []


@pytest.mark.slow
def test_attari_stays_feasible_when_measure_is_invalid():
    sc = AVG_TABLE3
    grid = FourierGrid(1.2e6, 1 << 24)
    calls = {t: price_attari(sc.model, sc.market, PricingRequest(t, sc.strikes), grid).calls for t in (0.1, 1.0)}
    for t, c in calls.items():
        assert np.all((c > 0) & (c < sc.market.s0))
        assert np.all(np.diff(c) < 0)
    assert np.all(calls[1.0] > calls[0.1])
