"""Convergence searches, timing harness and blow-up diagnostics.

Every engine is addressed by a method tag and a :class:`MethodSetup`
(domain upper limit ``W`` -- or the COS scale ``L`` -- plus a node count). The
searches compare prices against externally supplied reference values, so
reference generation never enters the timings.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import AlphaInfeasible, InvalidParams, NoConvergence
from .models import MarketParams, ModelParams
from .pricers import (
    CarrMadanConfig,
    FftConfig,
    PricingRequest,
    _alpha_for,
    no_arbitrage_bounds,
    price_attari,
    price_carr_madan,
    price_cos,
    price_dpd,
    price_dpd_vec,
    price_fft,
    price_fft_sa,
)
from .transforms import FourierGrid

__all__ = [
    "BATCH_SIZES",
    "METHODS",
    "AlphaSweepRow",
    "BenchReport",
    "BlowupCell",
    "ConvergenceReport",
    "MethodSetup",
    "alpha_sweep",
    "blowup_matrix",
    "convergence_curves",
    "moneyness_strikes",
    "price_options",
    "read_bench_csv",
    "read_convergence_csv",
    "search_min_domain",
    "search_min_n",
    "time_batches",
    "write_bench_csv",
    "write_convergence_csv",
    "write_plot_data",
]

METHODS = ("dpd", "dpd_opt", "at_opt", "fft", "cm_opt", "cos_opt")
BATCH_SIZES = (1, 10, 25, 100, 500, 2500)

_DOMAIN_CAP = 1e8
_L_CAP = 64.0
_N_CAP = 1 << 24


def _check_method(method: str) -> None:
    if method not in METHODS and method != "fft_sa":
        raise InvalidParams(f"unknown method {method!r}; expected one of {METHODS}")


def _next_pow2(n: int) -> int:
    return 1 << max(1, math.ceil(math.log2(max(n, 2))))


@dataclass(frozen=True)
class MethodSetup:
    """Engine configuration: ``domain`` is W for quadratures and L for COS.

    For the FFT, ``n`` is the transform size and ``dw = domain / n``. When a
    batch has more strikes than ``n`` the transform grows to the next power of
    two at the same ``dw`` (the strike window widens accordingly); ``exact``
    prices every strike on a shifted grid instead of interpolating.
    """

    method: str
    domain: float
    n: int
    alpha: float | None = None
    exact: bool = False

    def __post_init__(self):
        _check_method(self.method)

    def price(self, model: ModelParams, market: MarketParams, t: float, strikes) -> np.ndarray:
        req = PricingRequest(t, tuple(strikes))
        m = self.method
        if m == "cos_opt":
            return price_cos(model, market, req, self.domain, self.n).calls
        if m in ("fft", "fft_sa"):
            alpha = _alpha_for(model, self.alpha, enforce=True)
            n = self.n if self.exact or m == "fft_sa" else max(self.n, _next_pow2(len(req.strikes)))
            cfg = FftConfig(alpha, n, self.domain * n / self.n)
            if self.exact or m == "fft_sa":
                return price_fft_sa(model, market, req, cfg).calls
            return price_fft(model, market, req, cfg).calls
        grid = FourierGrid(self.domain, self.n)
        if m == "dpd":
            return price_dpd(model, market, req, grid).calls
        if m == "dpd_opt":
            return price_dpd_vec(model, market, req, grid).calls
        if m == "at_opt":
            return price_attari(model, market, req, grid).calls
        cfg = None if self.alpha is None else CarrMadanConfig(self.alpha)
        return price_carr_madan(model, market, req, grid, cfg).calls


def price_options(setup: MethodSetup, model, market, options: Sequence[tuple[float, float]]) -> np.ndarray:
    """Price ``(K, T)`` pairs, grouping by maturity; result aligned with ``options``."""
    out = np.empty(len(options))
    tenors: dict[float, list[int]] = {}
    for i, (_, t) in enumerate(options):
        tenors.setdefault(float(t), []).append(i)
    for t, idx in tenors.items():
        out[idx] = setup.price(model, market, t, [options[i][0] for i in idx])
    return out


def _max_error(setup, model, market, options, refs) -> float:
    with np.errstate(all="ignore"):
        err = np.abs(price_options(setup, model, market, options) - np.asarray(refs, dtype=float))
    return float(np.max(err)) if np.all(np.isfinite(err)) else math.inf


# ---------------------------------------------------------------- convergence


@dataclass(frozen=True)
class ConvergenceReport:
    """Error-vs-N curves for one engine at a fixed domain.

    ``errors[i, j]`` is the absolute error of option ``options[j]`` at ``ns[i]``.
    """

    method: str
    domain: float
    options: tuple[tuple[float, float], ...]
    ns: tuple[int, ...]
    errors: np.ndarray
    tol: float = 1e-10

    @property
    def curves(self) -> dict[tuple[float, float], list[tuple[int, float]]]:
        return {opt: [(n, float(e)) for n, e in zip(self.ns, self.errors[:, j])] for j, opt in enumerate(self.options)}

    @property
    def max_errors(self) -> np.ndarray:
        return np.max(self.errors, axis=1)

    @property
    def min_n_at_tol(self) -> int | None:
        ok = np.flatnonzero(self.max_errors <= self.tol)
        return int(self.ns[ok[0]]) if ok.size else None

    def __eq__(self, other):
        if not isinstance(other, ConvergenceReport):
            return NotImplemented
        return (
            (self.method, self.domain, self.options, self.ns, self.tol)
            == (other.method, other.domain, other.options, other.ns, other.tol)
            and np.array_equal(self.errors, other.errors)
        )


def convergence_curves(
    method: str,
    model: ModelParams,
    market: MarketParams,
    options: Sequence[tuple[float, float]],
    domain: float,
    refs,
    log2_ns: Iterable[int] = range(4, 13),
    alpha: float | None = None,
    tol: float = 1e-10,
) -> ConvergenceReport:
    """Figure mode: errors on ``N = 2^d`` grids. The FFT is read on-grid (no interpolation)."""
    options = tuple((float(k), float(t)) for k, t in options)
    refs = np.asarray(refs, dtype=float)
    ns = tuple(1 << d for d in log2_ns)
    rows = []
    for n in ns:
        setup = MethodSetup(method, domain, n, alpha, exact=True)
        with np.errstate(all="ignore"):
            rows.append(np.abs(price_options(setup, model, market, options) - refs))
    errors = np.where(np.isfinite(rows), rows, np.inf)
    return ConvergenceReport(method, float(domain), options, ns, errors, tol)


def search_min_n(
    method: str,
    model: ModelParams,
    market: MarketParams,
    options: Sequence[tuple[float, float]],
    domain: float,
    tol: float = 1e-4,
    *,
    refs,
    alpha: float | None = None,
    n_cap: int = _N_CAP,
) -> int:
    """Smallest N meeting ``tol`` on every option: doubling, then integer bisection.

    The FFT only admits powers of two and is measured on-grid, so its answer is
    the first passing power of two.
    """
    _check_method(method)

    def passes(n: int) -> bool:
        return _max_error(MethodSetup(method, domain, n, alpha, exact=True), model, market, options, refs) <= tol

    n = 2
    while not passes(n):
        if n >= n_cap:
            raise NoConvergence(f"{method}: tolerance {tol:g} not met with N={n_cap}", best=None)
        n *= 2
    if method in ("fft", "fft_sa") or n == 2:
        return n
    lo, hi = n // 2, n  # lo fails, hi passes
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if passes(mid):
            hi = mid
        else:
            lo = mid
    return hi


def search_min_domain(
    method: str,
    model: ModelParams,
    market: MarketParams,
    options: Sequence[tuple[float, float]],
    tol: float,
    *,
    refs,
    alpha: float | None = None,
    n_sat: int = 1 << 20,
    start: float | None = None,
    rel: float = 0.01,
) -> float:
    """Smallest W (L for COS) meeting ``tol`` at saturating N.

    Doubling from ``start`` until the tolerance holds, then bisection down to
    ``rel`` relative width; the passing end is returned.
    """
    _check_method(method)
    cap = _L_CAP if method == "cos_opt" else _DOMAIN_CAP
    x = start if start is not None else (1.0 if method == "cos_opt" else 8.0)

    def passes(d: float) -> bool:
        return _max_error(MethodSetup(method, d, n_sat, alpha, exact=True), model, market, options, refs) <= tol

    lo = None
    while not passes(x):
        lo = x
        if x >= cap:
            raise NoConvergence(f"{method}: tolerance {tol:g} not met below domain cap {cap:g}", best=x)
        x = min(2.0 * x, cap)
    hi = x
    if lo is None:
        return hi
    while (hi - lo) > rel * hi:
        mid = 0.5 * (lo + hi)
        if passes(mid):
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------- timing


@dataclass(frozen=True)
class BenchReport:
    method: str
    domain: float
    min_n: int
    sizes: tuple[int, ...]
    mean_seconds: tuple[float, ...]
    runs: tuple[int, ...] = field(default=())

    def seconds(self, size: int) -> float:
        return self.mean_seconds[self.sizes.index(size)]


def moneyness_strikes(s0: float, seed: int = 0, lo: float = 0.6, hi: float = 1.4) -> Callable[[int], np.ndarray]:
    """Deterministic strike batches drawn uniformly from ``[lo, hi] * s0``."""

    def draw(size: int) -> np.ndarray:
        rng = np.random.default_rng([seed, size])
        return s0 * rng.uniform(lo, hi, size)

    return draw


def time_batches(
    setup: MethodSetup,
    model: ModelParams,
    market: MarketParams,
    t: float,
    strikes: Callable[[int], np.ndarray] | None = None,
    sizes: Sequence[int] = BATCH_SIZES,
    runs: int = 100,
    warmup: int = 5,
    budget: float | None = None,
) -> BenchReport:
    """Mean single-threaded wall time per batch size.

    ``budget`` (seconds per batch size) caps the run count for very slow
    configurations; at least three timed runs are always made.
    """
    strikes = strikes or moneyness_strikes(market.s0)
    means, counts = [], []
    for size in sizes:
        batch = strikes(size)
        for _ in range(warmup):
            setup.price(model, market, t, batch)
        total, done = 0.0, 0
        while done < runs:
            start = time.perf_counter()
            setup.price(model, market, t, batch)
            total += time.perf_counter() - start
            done += 1
            if budget is not None and done >= 3 and total > budget:
                break
        means.append(total / done)
        counts.append(done)
    return BenchReport(setup.method, setup.domain, setup.n, tuple(sizes), tuple(means), tuple(counts))


# ---------------------------------------------------------------- diagnostics


@dataclass(frozen=True)
class BlowupCell:
    method: str
    t: float
    k: float
    value: float
    status: str  # feasible | negative | above_s0 | below_intrinsic | non_finite


def classify_price(value: float, market: MarketParams, k: float, t: float, tol: float = 1e-9) -> str:
    if not math.isfinite(value):
        return "non_finite"
    if value < -tol:
        return "negative"
    lo, hi = no_arbitrage_bounds(market, [k], t)
    if value > hi[0] + tol:
        return "above_s0"
    if value < lo[0] - tol:
        return "below_intrinsic"
    return "feasible"


def blowup_matrix(
    model: ModelParams,
    market: MarketParams,
    strikes: Sequence[float] = (60.0, 90.0, 140.0),
    tenors: Sequence[float] = (1.0, 0.1),
    n: int = 1 << 24,
    domain: float = 1.2e6,
    l_scale: float = 12.0,
    alpha: float = 1.75,
    methods: Sequence[str] = ("dpd_opt", "at_opt", "cm_opt", "fft", "cos_opt"),
) -> list[BlowupCell]:
    """Run each engine on a parameter set and classify every price.

    The Carr-Madan engines run with the alpha guard disabled: the point is to
    record what they produce outside their admissible region.
    """
    cells = []
    grid = FourierGrid(domain, n)
    for method in methods:
        for t in tenors:
            req = PricingRequest(t, tuple(strikes))
            with np.errstate(all="ignore"):
                if method == "dpd_opt":
                    calls = price_dpd_vec(model, market, req, grid).calls
                elif method == "at_opt":
                    calls = price_attari(model, market, req, grid).calls
                elif method == "cm_opt":
                    calls = price_carr_madan(model, market, req, grid, CarrMadanConfig(alpha), enforce_alpha=False).calls
                elif method == "fft":
                    # Strike-adjusted runs: each strike is a grid node whatever the window width.
                    fcfg = FftConfig(alpha, _next_pow2(n), domain)
                    calls = price_fft_sa(model, market, req, fcfg, enforce_alpha=False).calls
                elif method == "cos_opt":
                    calls = price_cos(model, market, req, l_scale, n).calls
                else:
                    raise InvalidParams(f"blow-up matrix does not cover {method!r}")
            for k, c in zip(strikes, calls):
                cells.append(BlowupCell(method, float(t), float(k), float(c), classify_price(float(c), market, k, t)))
    return cells


def method_feasible(cells: Sequence[BlowupCell], method: str) -> bool:
    """Row-level verdict: a method is feasible only if every one of its prices is."""
    return all(c.status == "feasible" for c in cells if c.method == method)


@dataclass(frozen=True)
class AlphaSweepRow:
    alpha: float
    status: str  # converged | biased | blown_up | infeasible
    max_error: float
    values: tuple[float, ...] = ()
    alpha_max: float | None = None


def alpha_sweep(
    model: ModelParams,
    market: MarketParams,
    options: Sequence[tuple[float, float]],
    alphas: Sequence[float],
    grid: FourierGrid,
    refs,
    tol: float = 1e-10,
) -> list[AlphaSweepRow]:
    """Carr-Madan error per dampening parameter against reference values."""
    refs = np.asarray(refs, dtype=float)
    rows = []
    for alpha in alphas:
        setup = MethodSetup("cm_opt", grid.w_max, grid.n, alpha)
        try:
            with np.errstate(all="ignore"):
                values = price_options(setup, model, market, options)
        except AlphaInfeasible as exc:
            rows.append(AlphaSweepRow(alpha, "infeasible", math.inf, (), exc.alpha_max))
            continue
        statuses = [classify_price(v, market, k, t) for v, (k, t) in zip(values, options)]
        err = np.abs(values - refs)
        max_err = float(np.max(err)) if np.all(np.isfinite(err)) else math.inf
        if any(s != "feasible" for s in statuses):
            status = "blown_up"
        elif max_err <= tol:
            status = "converged"
        else:
            status = "biased"
        rows.append(AlphaSweepRow(alpha, status, max_err, tuple(float(v) for v in values)))
    return rows


# ---------------------------------------------------------------- CSV


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


def write_convergence_csv(report: ConvergenceReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "domain", "tol", "k", "t", "n", "error"])
        for j, (k, t) in enumerate(report.options):
            for i, n in enumerate(report.ns):
                w.writerow([report.method, _fmt(report.domain), _fmt(report.tol), _fmt(k), _fmt(t), n, _fmt(report.errors[i, j])])


def read_convergence_csv(path) -> ConvergenceReport:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise InvalidParams(f"{path}: empty convergence file")
    options = list(dict.fromkeys((float(r["k"]), float(r["t"])) for r in rows))
    ns = list(dict.fromkeys(int(r["n"]) for r in rows))
    errors = np.empty((len(ns), len(options)))
    for r in rows:
        errors[ns.index(int(r["n"])), options.index((float(r["k"]), float(r["t"])))] = float(r["error"])
    first = rows[0]
    return ConvergenceReport(first["method"], float(first["domain"]), tuple(options), tuple(ns), errors, float(first["tol"]))


def write_plot_data(report: ConvergenceReport, path) -> None:
    """One row per (option, N) with ``log2n`` and ``log10err`` (errors floored at 1e-16)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "k", "t", "log2n", "log10err"])
        for j, (k, t) in enumerate(report.options):
            for i, n in enumerate(report.ns):
                err = report.errors[i, j]
                log_err = math.log10(max(err, 1e-16)) if math.isfinite(err) else math.inf
                w.writerow([report.method, _fmt(k), _fmt(t), _fmt(math.log2(n)), _fmt(log_err)])


def write_bench_csv(reports: Sequence[BenchReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "domain", "min_n", "batch_size", "mean_seconds", "runs"])
        for rep in reports:
            runs = rep.runs or (0,) * len(rep.sizes)
            for size, sec, cnt in zip(rep.sizes, rep.mean_seconds, runs):
                w.writerow([rep.method, _fmt(rep.domain), rep.min_n, size, _fmt(sec), cnt])


def read_bench_csv(path) -> list[BenchReport]:
    grouped: dict[tuple, list[dict]] = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            grouped.setdefault((r["method"], float(r["domain"]), int(r["min_n"])), []).append(r)
    return [
        BenchReport(
            method, domain, min_n,
            tuple(int(r["batch_size"]) for r in rows),
            tuple(float(r["mean_seconds"]) for r in rows),
            tuple(int(r["runs"]) for r in rows),
        )
        for (method, domain, min_n), rows in grouped.items()
    ]
