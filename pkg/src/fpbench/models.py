"""Characteristic functions, cumulants and validity checks for the BSM, Bates and AVG models.

Every characteristic function here is that of the log terminal price ``ln S_T``
under the risk-neutral measure, i.e. ``psi(w) = E[exp(i w ln S_T)]``, evaluated
element-wise on complex frequencies.
"""
from __future__ import annotations

import contextlib
import contextvars
import functools
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import InvalidParams, NonFiniteResult

__all__ = [
    "AvgParams",
    "AvgMeasureReport",
    "BatesParams",
    "BsmParams",
    "MarketParams",
    "ModelParams",
    "check_avg_measure",
    "count_cf_evaluations",
    "cumulants",
    "evaluate_cf",
    "load_model_file",
    "mean_log_price",
    "model_from_dict",
    "model_to_dict",
]


@dataclass(frozen=True)
class MarketParams:
    s0: float
    r: float

    def __post_init__(self):
        if not (math.isfinite(self.s0) and self.s0 > 0):
            raise InvalidParams(f"s0 must be positive, got {self.s0!r}")
        if not math.isfinite(self.r):
            raise InvalidParams(f"r must be finite, got {self.r!r}")


@dataclass(frozen=True)
class BsmParams:
    sigma: float

    tag = "bsm"

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise InvalidParams(f"sigma must be positive, got {self.sigma!r}")

    def log_cf(self, market: MarketParams, t: float, w: np.ndarray) -> np.ndarray:
        iw = 1j * w
        drift = math.log(market.s0) + (market.r - 0.5 * self.sigma**2) * t
        return iw * drift + 0.5 * iw * iw * self.sigma**2 * t


@dataclass(frozen=True)
class BatesParams:
    """Heston stochastic variance plus lognormal jumps.

    ``lam`` is the jump intensity; it is serialized under the key ``"lambda"``.
    """

    v0: float
    v_bar: float
    a: float
    eta: float
    rho: float
    lam: float
    mu_j: float
    nu_j: float

    tag = "bates"

    def __post_init__(self):
        vals = asdict(self)
        bad = [k for k, v in vals.items() if not math.isfinite(v)]
        if bad:
            raise InvalidParams(f"non-finite Bates parameters: {bad}")
        if not -1.0 <= self.rho <= 1.0:
            raise InvalidParams(f"rho must lie in [-1, 1], got {self.rho}")
        if self.a <= 0 or self.eta <= 0:
            raise InvalidParams("a and eta must be positive")
        if min(self.v0, self.v_bar, self.lam, self.nu_j) < 0:
            raise InvalidParams("v0, v_bar, lambda and nu_j must be non-negative")
        if self.mu_j <= -1:
            raise InvalidParams(f"mu_j must exceed -1, got {self.mu_j}")

    def log_cf(self, market: MarketParams, t: float, w: np.ndarray) -> np.ndarray:
        # Gatheral's form: the ratio g stays inside the unit disk for real w,
        # so the complex logarithm never wraps.
        iw = 1j * w
        eta2 = self.eta * self.eta
        alpha = -0.5 * w * w - 0.5 * iw
        beta = self.a - self.rho * self.eta * iw
        h = np.sqrt(beta * beta - 2.0 * eta2 * alpha)
        r_minus = (beta - h) / eta2
        r_plus = (beta + h) / eta2
        g = r_minus / r_plus
        e = np.exp(-h * t)
        d_term = r_minus * (1.0 - e) / (1.0 - g * e)
        c_term = self.a * (r_minus * t - (2.0 / eta2) * np.log((1.0 - g * e) / (1.0 - g)))
        jump = self.lam * t * (
            np.exp(iw * math.log1p(self.mu_j) + 0.5 * self.nu_j**2 * iw * (iw - 1.0)) - 1.0
        )
        drift = iw * (math.log(market.s0) + (market.r - self.lam * self.mu_j) * t)
        return c_term * self.v_bar + d_term * self.v0 + jump + drift


@dataclass(frozen=True)
class AvgParams:
    """Asymmetric Variance Gamma.

    Parameter sets outside the risk-neutral region (``1/nu <= theta + sigma^2/2``)
    are accepted: the drift compensator then takes the principal complex
    logarithm of a negative number. That is how the blow-up diagnostics are
    reproduced; ``check_avg_measure`` reports the violation.
    """

    sigma: float
    nu: float
    theta: float

    tag = "avg"

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise InvalidParams(f"sigma must be positive, got {self.sigma!r}")
        if not (math.isfinite(self.nu) and self.nu > 0):
            raise InvalidParams(f"nu must be positive, got {self.nu!r}")
        if not math.isfinite(self.theta):
            raise InvalidParams(f"theta must be finite, got {self.theta!r}")
        if self.compensator_base == 0.0:
            raise InvalidParams("1 - theta*nu - sigma^2*nu/2 must be non-zero")

    @property
    def compensator_base(self) -> float:
        return 1.0 - self.theta * self.nu - 0.5 * self.sigma**2 * self.nu

    @property
    def compensator(self) -> complex:
        """Drift correction making ``S_t e^{-rt}`` a martingale (complex when invalid)."""
        base = self.compensator_base
        if base > 0:
            return math.log(base) / self.nu
        return complex(np.log(complex(base))) / self.nu

    def log_cf(self, market: MarketParams, t: float, w: np.ndarray) -> np.ndarray:
        iw = 1j * w
        base = 1.0 - iw * self.theta * self.nu + 0.5 * self.sigma**2 * self.nu * w * w
        drift = iw * (math.log(market.s0) + (market.r + self.compensator) * t)
        return drift - (t / self.nu) * np.log(base)


ModelParams = Union[BsmParams, BatesParams, AvgParams]

_MODEL_TYPES = {cls.tag: cls for cls in (BsmParams, BatesParams, AvgParams)}

_cf_counter: contextvars.ContextVar[list[int] | None] = contextvars.ContextVar(
    "cf_counter", default=None
)


@contextlib.contextmanager
def count_cf_evaluations():
    """Count characteristic-function evaluations (one per frequency) inside the block.

    >>> with count_cf_evaluations() as n:
    ...     _ = evaluate_cf(BsmParams(0.2), MarketParams(100, 0.0), 1.0, [0.0, 1.0])
    >>> n[0]
    2
    """
    box = [0]
    token = _cf_counter.set(box)
    try:
        yield box
    finally:
        _cf_counter.reset(token)


def evaluate_cf(model: ModelParams, market: MarketParams, t: float, w, check: bool = True):
    """Evaluate ``psi_{ln S_t}(w)`` for scalar or array ``w`` (complex allowed).

    With ``check=True`` a non-finite value raises :class:`NonFiniteResult`;
    engines pass ``check=False`` and surface blow-ups at the price level.
    """
    if not t > 0:
        raise InvalidParams(f"maturity must be positive, got {t!r}")
    scalar = np.ndim(w) == 0
    w = np.asarray(w, dtype=complex)
    box = _cf_counter.get()
    if box is not None:
        box[0] += w.size
    with np.errstate(all="ignore"):
        out = np.exp(model.log_cf(market, t, w))
    if check and not np.all(np.isfinite(out)):
        raise NonFiniteResult(f"{model.tag} characteristic function overflowed at t={t}")
    return complex(out) if scalar else out


_COMPLEX_STEP = 1e-8


def mean_log_price(model: ModelParams, market: MarketParams, t: float, share: bool = False) -> float:
    """Mean of ``ln S_t`` under the spot measure, or under the share measure if ``share``.

    Uses a complex step on the cumulant generating function ``ln psi(-i u)``,
    which is real-analytic in ``u``: no subtractive cancellation, O(h^2) error.
    For parameter sets outside the risk-neutral region the imaginary part of
    the derivative is returned, which is the limit the Fourier integrands need.
    """
    h = _COMPLEX_STEP
    if share:
        vals = evaluate_cf(model, market, t, np.array([h - 1j, -1j]), check=False)
        ratio = vals[0] / vals[1]
    else:
        ratio = evaluate_cf(model, market, t, np.array([h]), check=False)[0]
    return float(np.log(ratio).imag / h)


_FD_OFFSETS = np.arange(-4, 5, dtype=float)
_FD_STEP = 0.1


@functools.lru_cache(maxsize=8)
def _derivative_operator(h: float) -> np.ndarray:
    """Maps samples at ``j h`` to derivatives 0..8 at the origin of their degree-8 interpolant."""
    # Invert on the integer offsets (much better conditioned), then rescale by h^-n.
    vander = np.vander(_FD_OFFSETS, 9, increasing=True)
    scale = np.array([math.factorial(n) / h**n for n in range(9)])
    return scale[:, None] * np.linalg.inv(vander)


def _taylor_from_samples(h: float, values: np.ndarray) -> np.ndarray:
    return _derivative_operator(h) @ values


def _numeric_cumulants(model: ModelParams, market: MarketParams, t: float) -> tuple[float, float, float]:
    # Error orders of the 9-point central scheme for derivatives 1, 2, 4.
    orders = {1: 8, 2: 8, 4: 6}
    estimates = []
    for h in (_FD_STEP, 0.5 * _FD_STEP):
        u = _FD_OFFSETS * h
        psi = evaluate_cf(model, market, t, -1j * u, check=False)
        kappa = np.log(psi).real
        estimates.append(_taylor_from_samples(h, kappa))
    coarse, fine = estimates
    out = []
    for n in (1, 2, 4):
        p = orders[n]
        out.append((2**p * fine[n] - coarse[n]) / (2**p - 1))
    return out[0], out[1], out[2]


def cumulants(model: ModelParams, market: MarketParams, t: float, k: float) -> tuple[float, float, float]:
    """First, second and fourth cumulants of ``ln(S_t / k)``.

    BSM is analytic. Bates and AVG go through high-order central differences of
    ``u -> ln psi(-i u)`` at zero, Richardson-extrapolated over two step sizes.
    """
    if not t > 0:
        raise InvalidParams(f"maturity must be positive, got {t!r}")
    if not k > 0:
        raise InvalidParams(f"strike must be positive, got {k!r}")
    if isinstance(model, BsmParams):
        c1 = math.log(market.s0 / k) + (market.r - 0.5 * model.sigma**2) * t
        return c1, model.sigma**2 * t, 0.0
    c1, c2, c4 = _numeric_cumulants(model, market, t)
    return float(c1) - math.log(k), float(c2), float(c4)


@dataclass(frozen=True)
class AvgMeasureReport:
    measure_ok: bool
    alpha_max: float


def check_avg_measure(params: AvgParams) -> AvgMeasureReport:
    """Risk-neutral validity of an AVG parameter set and the Carr-Madan bound on alpha."""
    s2 = params.sigma**2
    measure_ok = 1.0 / params.nu > params.theta + 0.5 * s2
    alpha_max = math.sqrt(params.theta**2 / s2**2 + 2.0 / (s2 * params.nu)) - params.theta / s2 - 1.0
    return AvgMeasureReport(measure_ok=measure_ok, alpha_max=alpha_max)


def model_to_dict(model: ModelParams) -> dict:
    d = asdict(model)
    if isinstance(model, BatesParams):
        d["lambda"] = d.pop("lam")
    return d


def model_from_dict(doc: dict) -> tuple[ModelParams, MarketParams]:
    """Build ``(model, market)`` from ``{"model": ..., "params": {...}, "market": {...}}``."""
    unknown = set(doc) - {"model", "params", "market"}
    if unknown:
        raise InvalidParams(f"unknown top-level fields: {sorted(unknown)}")
    try:
        cls = _MODEL_TYPES[doc["model"]]
        params = dict(doc["params"])
        market_doc = dict(doc["market"])
    except KeyError as exc:
        raise InvalidParams(f"missing or unknown field: {exc}") from None
    if cls is BatesParams and "lambda" in params:
        params["lam"] = params.pop("lambda")
    try:
        model = cls(**{k: float(v) for k, v in params.items()})
        market = MarketParams(**{k: float(v) for k, v in market_doc.items()})
    except TypeError as exc:
        raise InvalidParams(str(exc)) from None
    return model, market


def load_model_file(path: str | Path) -> tuple[ModelParams, MarketParams]:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
