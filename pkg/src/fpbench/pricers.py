"""Fourier pricing engines for European calls.

Seven engines share the same inputs (model, market, request) and return a
:class:`PriceVector`:

========  ==============================================================
dpd       delta-probability decomposition, one strike at a time
dpd_opt   same integrals, characteristic function shared across strikes
at_opt    Attari's single-integral formula, strike-vectorized
cos_opt   Fourier-cosine expansion, multi-strike
cm_opt    Carr-Madan damped transform by direct trapezoid, strike-vectorized
fft       Carr-Madan on an FFT strike grid with log-linear interpolation
fft_sa    successive FFT runs whose grids are shifted onto the strikes
========  ==============================================================

Engines never clamp. A non-finite quadrature or a price outside the
no-arbitrage band is reported through :meth:`PriceVector.blowup`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import AlphaInfeasible, InvalidParams
from .models import (
    AvgParams,
    BatesParams,
    MarketParams,
    ModelParams,
    check_avg_measure,
    cumulants,
    evaluate_cf,
    mean_log_price,
)
from .transforms import FourierGrid, fft

__all__ = [
    "CarrMadanConfig",
    "CosGrid",
    "DEFAULT_ALPHA",
    "FftConfig",
    "PriceVector",
    "PricingRequest",
    "call_from_parity",
    "no_arbitrage_bounds",
    "price_attari",
    "price_carr_madan",
    "price_cos",
    "price_dpd",
    "price_dpd_vec",
    "price_fft",
    "price_fft_sa",
    "put_from_parity",
]

DEFAULT_ALPHA = 1.75

# Upper bound on strikes x nodes held in memory at once by the vectorized engines.
_CHUNK_ELEMENTS = 1 << 21


@dataclass(frozen=True)
class PricingRequest:
    t: float
    strikes: tuple[float, ...]

    def __post_init__(self):
        if not (math.isfinite(self.t) and self.t > 0):
            raise InvalidParams(f"maturity must be positive, got {self.t!r}")
        strikes = tuple(float(k) for k in np.atleast_1d(self.strikes))
        if not strikes:
            raise InvalidParams("strike list is empty")
        if not all(math.isfinite(k) and k > 0 for k in strikes):
            raise InvalidParams("strikes must be positive and finite")
        object.__setattr__(self, "strikes", strikes)


@dataclass(frozen=True)
class CosGrid:
    """Series length and truncation interval actually used by the COS engine."""

    l_scale: float
    n_terms: int
    a: np.ndarray
    b: np.ndarray


@dataclass(frozen=True)
class CarrMadanConfig:
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise InvalidParams(f"alpha must be positive, got {self.alpha!r}")


@dataclass(frozen=True)
class FftConfig:
    """FFT grid: ``n`` frequencies ``0, dw, ..., (n-1) dw`` with ``dw = w_max / n``.

    The Nyquist relation fixes the log-strike spacing ``dk = 2 pi / (n dw)``
    and the half-width ``k_max = n dk / 2`` of the strike window.
    """

    alpha: float
    n: int
    w_max: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise InvalidParams(f"alpha must be positive, got {self.alpha!r}")
        if int(self.n) != self.n or self.n < 2 or self.n & (self.n - 1):
            raise InvalidParams(f"FFT size must be a power of 2, got {self.n!r}")
        if not (math.isfinite(self.w_max) and self.w_max > 0):
            raise InvalidParams(f"w_max must be positive, got {self.w_max!r}")
        object.__setattr__(self, "n", int(self.n))

    @classmethod
    def from_kmax(cls, alpha: float, k_max: float, n: int) -> "FftConfig":
        return cls(alpha=alpha, n=n, w_max=n * math.pi / k_max)

    @property
    def dw(self) -> float:
        return self.w_max / self.n

    @property
    def dk(self) -> float:
        return 2.0 * math.pi / (self.n * self.dw)

    @property
    def k_max(self) -> float:
        return 0.5 * self.n * self.dk

    @property
    def quadrature_grid(self) -> FourierGrid:
        """The trapezoid grid whose direct Carr-Madan sum the FFT reproduces."""
        return FourierGrid(w_max=(self.n - 1) * self.dw, n=self.n - 1)


@dataclass(frozen=True)
class PriceVector:
    strikes: np.ndarray
    t: float
    calls: np.ndarray
    method: str
    grid_used: object
    interpolated: np.ndarray = field(default=None)
    delta: np.ndarray | None = None

    def __post_init__(self):
        if self.interpolated is None:
            object.__setattr__(self, "interpolated", np.zeros(len(self.calls), dtype=bool))

    def __len__(self) -> int:
        return len(self.calls)

    def blowup(self, market: MarketParams, tol: float = 1e-9) -> np.ndarray:
        """Per-strike flag: non-finite, or outside ``[max(S0 - K e^{-rT}, 0), S0]``."""
        lo, hi = no_arbitrage_bounds(market, self.strikes, self.t)
        c = self.calls
        with np.errstate(invalid="ignore"):
            inside = (c >= lo - tol) & (c <= hi + tol)
        return ~(np.isfinite(c) & inside)


def no_arbitrage_bounds(market: MarketParams, strikes, t: float) -> tuple[np.ndarray, np.ndarray]:
    strikes = np.asarray(strikes, dtype=float)
    lower = np.maximum(market.s0 - strikes * math.exp(-market.r * t), 0.0)
    return lower, np.full_like(strikes, market.s0)


def _unique_strikes(req: PricingRequest) -> tuple[np.ndarray, np.ndarray]:
    strikes = np.asarray(req.strikes)
    if strikes.size == 1:
        return strikes, np.zeros(1, dtype=np.intp)
    return np.unique(strikes, return_inverse=True)


def _strike_sums(
    log_strikes: np.ndarray,
    grid: FourierGrid,
    integrand: Callable[[np.ndarray], np.ndarray],
    origin,
) -> np.ndarray:
    """Trapezoid sums ``sum_j weight_j Re[exp(-i w_j ln K) G(w_j)]`` for every strike.

    ``integrand`` maps a node chunk to ``G`` of shape ``(chunk,)`` or
    ``(chunk, c)``; ``origin`` is the per-strike value of the full integrand at
    ``w = 0`` with shape ``(M,)`` or ``(M, c)``. Nodes are processed in chunks
    so 2^24-point grids stay within memory.
    """
    m = log_strikes.size
    dw = grid.dw
    chunk = max(1024, _CHUNK_ELEMENTS // max(m, 1))
    total = 0.5 * dw * np.asarray(origin, dtype=float)
    for lo in range(1, grid.n + 1, chunk):
        hi = min(lo + chunk, grid.n + 1)
        w = dw * np.arange(lo, hi)
        g = integrand(w)
        wts = np.full(w.size, dw)
        if hi == grid.n + 1:
            wts[-1] = 0.5 * dw
        g = g * (wts if g.ndim == 1 else wts[:, None])
        total = total + _phase_sums(-log_strikes, w, g)
    return total


def _phase_sums(x: np.ndarray, freqs: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """``Re sum_j exp(i x_m f_j) c_j`` for every ``x_m``, chunked over frequencies.

    Each row is reduced on its own (no BLAS), so a strike's value does not
    depend on which other strikes share the batch.
    """
    m = x.size
    flat = coeffs.reshape(freqs.size, -1)
    re, im = flat.real, flat.imag
    chunk = max(1024, _CHUNK_ELEMENTS // max(m, 1))
    out = np.zeros((m, flat.shape[1]))
    for lo in range(0, freqs.size, chunk):
        arg = np.outer(x, freqs[lo:lo + chunk])
        cos, sin = np.cos(arg), np.sin(arg)
        for j in range(flat.shape[1]):
            out[:, j] += (cos * re[lo:lo + chunk, j] - sin * im[lo:lo + chunk, j]).sum(axis=1)
    return out.reshape((m,) + coeffs.shape[1:])


def _alpha_for(model: ModelParams, cfg_alpha: float | None, enforce: bool) -> float:
    if isinstance(model, AvgParams):
        report = check_avg_measure(model)
        if cfg_alpha is None:
            raise AlphaInfeasible(float("nan"), report.alpha_max)
        if enforce and not 0 < cfg_alpha < report.alpha_max:
            raise AlphaInfeasible(cfg_alpha, report.alpha_max)
        return cfg_alpha
    return DEFAULT_ALPHA if cfg_alpha is None else cfg_alpha


def price_dpd(model: ModelParams, market: MarketParams, req: PricingRequest, grid: FourierGrid) -> PriceVector:
    """Delta-probability decomposition, each strike integrated on its own.

    Every quadrature node costs three characteristic-function evaluations:
    ``psi(w - i)`` and ``psi(-i)`` for the delta integral, ``psi(w)`` for the
    exercise probability. Duplicate strikes are priced once.
    """
    t = req.t
    uniq, inverse = _unique_strikes(req)
    calls = np.empty(uniq.size)
    delta = np.empty(uniq.size)

    def cf(w):
        return evaluate_cf(model, market, t, w, check=False)

    def integrand(w):
        # psi(-i) is re-evaluated at every node: no sharing in the plain variant.
        shifted = cf(w - 1j) / cf(np.full(w.shape, -1j))
        return np.column_stack((shifted, cf(w))) / (1j * w[:, None])

    with np.errstate(all="ignore"):
        for i, strike in enumerate(uniq):
            lnk = np.array([math.log(strike)])
            origin = np.column_stack((
                mean_log_price(model, market, t, share=True) - lnk,
                mean_log_price(model, market, t) - lnk,
            ))
            sums = _strike_sums(lnk, grid, integrand, origin)[0]
            pi1 = 0.5 + sums[0] / math.pi
            pi2 = 0.5 + sums[1] / math.pi
            delta[i] = pi1
            calls[i] = market.s0 * pi1 - math.exp(-market.r * t) * strike * pi2
    return PriceVector(
        strikes=np.asarray(req.strikes), t=t, calls=calls[inverse], method="dpd",
        grid_used=grid, delta=delta[inverse],
    )


def price_dpd_vec(model: ModelParams, market: MarketParams, req: PricingRequest, grid: FourierGrid) -> PriceVector:
    """Delta-probability decomposition with the characteristic function shared across strikes."""
    t = req.t
    uniq, inverse = _unique_strikes(req)
    lnk = np.log(uniq)
    with np.errstate(all="ignore"):
        psi_minus_i = evaluate_cf(model, market, t, -1j, check=False)
        origin = np.column_stack((
            mean_log_price(model, market, t, share=True) - lnk,
            mean_log_price(model, market, t) - lnk,
        ))

        def integrand(w):
            shifted = evaluate_cf(model, market, t, w - 1j, check=False) / psi_minus_i
            plain = evaluate_cf(model, market, t, w, check=False)
            return np.column_stack((shifted, plain)) / (1j * w[:, None])

        sums = _strike_sums(lnk, grid, integrand, origin)
        pi1 = 0.5 + sums[:, 0] / math.pi
        pi2 = 0.5 + sums[:, 1] / math.pi
        calls = market.s0 * pi1 - math.exp(-market.r * t) * uniq * pi2
    return PriceVector(
        strikes=np.asarray(req.strikes), t=t, calls=calls[inverse], method="dpd_opt",
        grid_used=grid, delta=pi1[inverse],
    )


def price_attari(model: ModelParams, market: MarketParams, req: PricingRequest, grid: FourierGrid) -> PriceVector:
    """Attari's formula: one integral whose integrand carries a ``1/(1 + w^2)`` factor."""
    t = req.t
    uniq, inverse = _unique_strikes(req)
    lnk = np.log(uniq)
    with np.errstate(all="ignore"):
        origin = 1.0 + mean_log_price(model, market, t) - lnk

        # (Re F + Im F / w) / (1 + w^2) with F = exp(-i w ln K) psi(w), folded into one Re[.]
        def integrand(w):
            psi = evaluate_cf(model, market, t, w, check=False)
            return psi * (1.0 - 1j / w) / (1.0 + w * w)

        integral = _strike_sums(lnk, grid, integrand, origin)
        calls = market.s0 - math.exp(-market.r * t) * uniq * (0.5 + integral / math.pi)
    return PriceVector(
        strikes=np.asarray(req.strikes), t=t, calls=calls[inverse], method="at_opt", grid_used=grid,
    )


def _carr_madan_kernel(model, market, t, alpha):
    a1 = alpha + 1.0

    def integrand(w):
        psi = evaluate_cf(model, market, t, w - a1 * 1j, check=False)
        return psi / (alpha * alpha + alpha - w * w + 1j * (2.0 * alpha + 1.0) * w)

    return integrand


def price_carr_madan(
    model: ModelParams,
    market: MarketParams,
    req: PricingRequest,
    grid: FourierGrid,
    cfg: CarrMadanConfig | None = None,
    enforce_alpha: bool = True,
) -> PriceVector:
    """Carr-Madan damped call transform, integrated directly for every strike.

    For AVG an explicit ``cfg`` is mandatory and ``alpha`` must lie below
    ``check_avg_measure(model).alpha_max``; ``enforce_alpha=False`` skips that
    guard so the failure itself can be studied.
    """
    alpha = _alpha_for(model, None if cfg is None else cfg.alpha, enforce_alpha)
    t = req.t
    uniq, inverse = _unique_strikes(req)
    lnk = np.log(uniq)
    integrand = _carr_madan_kernel(model, market, t, alpha)
    with np.errstate(all="ignore"):
        origin = np.full(lnk.size, integrand(np.zeros(1))[0].real)
        sums = _strike_sums(lnk, grid, integrand, origin)
        calls = np.exp(-alpha * lnk - market.r * t) / math.pi * sums
    return PriceVector(
        strikes=np.asarray(req.strikes), t=t, calls=calls[inverse], method="cm_opt", grid_used=grid,
    )


def _fft_run(model, market, t, cfg: FftConfig, alpha: float, center: float) -> tuple[np.ndarray, np.ndarray]:
    """One FFT pass; returns log-strike nodes and call prices on them.

    Node ``n/2`` of the strike grid sits exactly at ``center``.
    """
    n, dw = cfg.n, cfg.dw
    w = dw * np.arange(n)
    weights = np.full(n, dw)
    weights[0] = weights[-1] = 0.5 * dw
    k_start = center - cfg.k_max
    log_strikes = k_start + cfg.dk * np.arange(n)
    with np.errstate(all="ignore"):
        g = _carr_madan_kernel(model, market, t, alpha)(w)
        x = np.exp(-1j * w * k_start) * g * weights
        y = fft(x)
        calls = np.exp(-alpha * log_strikes - market.r * t) / math.pi * y.real
    log_strikes[n // 2] = center
    return log_strikes, calls


def price_fft(
    model: ModelParams,
    market: MarketParams,
    req: PricingRequest,
    cfg: FftConfig,
    enforce_alpha: bool = True,
) -> PriceVector:
    """Carr-Madan via one FFT on a log-strike grid centred at ``ln S0``.

    Strikes off the grid are interpolated linearly in ``(ln K, ln C)``; when
    either bracketing price is non-positive the fallback is linear in ``C``.
    """
    alpha = _alpha_for(model, cfg.alpha, enforce_alpha)
    ks, cs = _fft_run(model, market, req.t, cfg, alpha, math.log(market.s0))
    lnk = np.log(np.asarray(req.strikes))
    pos = (lnk - ks[0]) / cfg.dk
    if np.any(pos < -1e-9) or np.any(pos > cfg.n - 1 + 1e-9):
        raise InvalidParams(
            f"strikes outside the FFT window exp([{ks[0]:.4f}, {ks[-1]:.4f}]); increase n or reduce w_max"
        )
    nearest = np.clip(np.rint(pos).astype(int), 0, cfg.n - 1)
    on_grid = np.abs(lnk - ks[nearest]) < 1e-12
    lo = np.clip(np.floor(pos).astype(int), 0, cfg.n - 2)
    hi = lo + 1
    frac = (lnk - ks[lo]) / (ks[hi] - ks[lo])
    c_lo, c_hi = cs[lo], cs[hi]
    with np.errstate(all="ignore"):
        log_interp = np.exp((1 - frac) * np.log(c_lo) + frac * np.log(c_hi))
    lin_interp = (1 - frac) * c_lo + frac * c_hi
    interp = np.where((c_lo > 0) & (c_hi > 0), log_interp, lin_interp)
    calls = np.where(on_grid, cs[nearest], interp)
    return PriceVector(
        strikes=np.asarray(req.strikes), t=req.t, calls=calls, method="fft", grid_used=cfg,
        interpolated=~on_grid,
    )


def fft_sa_partition(log_strikes, dk: float, n: int) -> list[tuple[float, list[int]]]:
    """Group strikes into FFT runs so every strike is a node of some run.

    Greedy: anchor a run at the smallest uncovered log-strike; a strike joins
    when its offset from the anchor is an integer multiple of ``dk`` that fits
    in the window. Returns ``(anchor, member indices)`` per run.
    """
    log_strikes = np.asarray(log_strikes, dtype=float)
    order = np.argsort(log_strikes, kind="stable")
    covered = np.zeros(log_strikes.size, dtype=bool)
    runs = []
    for i in order:
        if covered[i]:
            continue
        anchor = log_strikes[i]
        steps = (log_strikes - anchor) / dk
        offset = np.rint(steps)
        members = (
            ~covered
            & (np.abs(steps - offset) < 1e-9)
            & (offset >= -(n // 2))
            & (offset <= n // 2 - 1)
        )
        members[i] = True
        covered |= members
        runs.append((anchor, np.flatnonzero(members).tolist()))
    return runs


def price_fft_sa(
    model: ModelParams,
    market: MarketParams,
    req: PricingRequest,
    cfg: FftConfig,
    enforce_alpha: bool = True,
) -> PriceVector:
    """FFT with strike-adjusted grids: as many runs as needed, no interpolation."""
    alpha = _alpha_for(model, cfg.alpha, enforce_alpha)
    lnk = np.log(np.asarray(req.strikes))
    calls = np.empty(lnk.size)
    runs = fft_sa_partition(lnk, cfg.dk, cfg.n)
    for anchor, members in runs:
        ks, cs = _fft_run(model, market, req.t, cfg, alpha, anchor)
        idx = cfg.n // 2 + np.rint((lnk[members] - anchor) / cfg.dk).astype(int)
        calls[members] = cs[idx]
    return PriceVector(
        strikes=np.asarray(req.strikes), t=req.t, calls=calls, method="fft_sa",
        grid_used=(cfg, len(runs)),
    )


def price_cos(
    model: ModelParams,
    market: MarketParams,
    req: PricingRequest,
    l_scale: float,
    n_terms: int,
) -> PriceVector:
    """Fourier-cosine expansion priced for many strikes at once.

    The interval is ``c1 -/+ L sqrt(c2 + sqrt(c4))`` from the cumulants of
    ``ln(S_T/K)`` (``c4`` dropped for Bates). Its width does not depend on the
    strike, so one set of characteristic-function values serves every strike;
    the payoff coefficients use the closed-form cosine integrals of the call.
    """
    if not (math.isfinite(l_scale) and l_scale > 0):
        raise InvalidParams(f"L must be positive, got {l_scale!r}")
    if int(n_terms) != n_terms or n_terms < 2:
        raise InvalidParams(f"n_terms must be an integer >= 2, got {n_terms!r}")
    t = req.t
    uniq, inverse = _unique_strikes(req)
    lnk = np.log(uniq)
    mean, c2, c4 = cumulants(model, market, t, 1.0)
    if isinstance(model, BatesParams):
        c4 = 0.0
    half = l_scale * math.sqrt(c2 + math.sqrt(max(c4, 0.0)))
    a = mean - lnk - half
    b = mean - lnk + half
    width = 2.0 * half
    n_terms = int(n_terms)
    lower = np.maximum(a, 0.0)
    shift = lower - a
    with np.errstate(all="ignore"):
        # psi(u) exp(-i u ln K) exp(-i u a) collapses to a strike-free factor.
        u = np.arange(n_terms) * math.pi / width
        psi = evaluate_cf(model, market, t, u, check=False)
        series = (psi * np.exp(-1j * u * (mean - half))).real
        series[0] *= 0.5
        # The payoff coefficients are chi - psi with closed-form cosine integrals
        # over [lower, b]; summed against the series they reduce to
        #   e^b A - e^lower Re[E v1] + Re[E v2] - (b - lower) series_0,
        # with E = exp(i u (lower - a)) the only strike-by-term quantity.
        damped = series / (1.0 + u * u)
        alt_sum = damped[::2].sum() - damped[1::2].sum()
        coeffs = np.empty((n_terms, 2), dtype=complex)
        coeffs[:, 0] = damped * (1.0 - 1j * u)
        coeffs[0, 1] = 0.0
        coeffs[1:, 1] = -1j * series[1:] / u[1:]
        sums = _phase_sums(shift, u, coeffs)
        total = np.exp(b) * alt_sum - np.exp(lower) * sums[:, 0] + sums[:, 1] - (b - lower) * series[0]
        calls = math.exp(-market.r * t) * (2.0 / width) * uniq * total
        calls[b <= lower] = 0.0
    grid = CosGrid(l_scale=l_scale, n_terms=int(n_terms), a=a[inverse], b=b[inverse])
    return PriceVector(strikes=np.asarray(req.strikes), t=t, calls=calls[inverse], method="cos_opt", grid_used=grid)


def put_from_parity(call: PriceVector, market: MarketParams) -> PriceVector:
    """``P = C - S0 + K e^{-rT}`` per strike."""
    fwd_k = call.strikes * math.exp(-market.r * call.t)
    return PriceVector(
        strikes=call.strikes, t=call.t, calls=call.calls - market.s0 + fwd_k,
        method=call.method + ":put", grid_used=call.grid_used, interpolated=call.interpolated,
    )


def call_from_parity(put: PriceVector, market: MarketParams) -> PriceVector:
    fwd_k = put.strikes * math.exp(-market.r * put.t)
    method = put.method[:-4] if put.method.endswith(":put") else put.method
    return PriceVector(
        strikes=put.strikes, t=put.t, calls=put.calls + market.s0 - fwd_k,
        method=method, grid_used=put.grid_used, interpolated=put.interpolated,
    )
