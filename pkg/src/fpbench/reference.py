"""Reference prices: Black-Scholes closed form and the two-method Fourier oracle."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AgreementFailure
from .models import MarketParams, ModelParams, model_to_dict
from .pricers import CarrMadanConfig, PricingRequest, price_attari, price_carr_madan
from .transforms import FourierGrid

__all__ = [
    "AGREEMENT_TOL",
    "ReferenceCache",
    "ReferenceQuote",
    "bsm_closed_form",
    "dual_method_reference",
    "dual_method_references",
]

AGREEMENT_TOL = 1e-10


@dataclass(frozen=True)
class ReferenceQuote:
    value: float
    source: str  # "closed_form" or "dual_method"
    agreement: float | None = None


def _norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def bsm_closed_form(market: MarketParams, sigma: float, k: float, t: float) -> ReferenceQuote:
    """Black-Scholes European call."""
    s0, r = market.s0, market.r
    vol = sigma * math.sqrt(t)
    d1 = (math.log(s0 / k) + (r + 0.5 * sigma * sigma) * t) / vol
    d2 = d1 - vol
    value = s0 * _norm_cdf(d1) - k * math.exp(-r * t) * _norm_cdf(d2)
    return ReferenceQuote(value=value, source="closed_form")


def dual_method_references(
    model: ModelParams,
    market: MarketParams,
    strikes,
    t: float,
    domain: float,
    n: int,
    alpha: float | None = None,
    enforce_alpha: bool = True,
    tol: float = AGREEMENT_TOL,
) -> list[ReferenceQuote]:
    """Attari and Carr-Madan on one shared grid; each quote is their mean.

    Raises :class:`AgreementFailure` on the first strike whose two prices are
    not within ``tol`` of each other (or are not finite).
    """
    req = PricingRequest(t, tuple(strikes))
    grid = FourierGrid(domain, n)
    cfg = None if alpha is None else CarrMadanConfig(alpha)
    at = price_attari(model, market, req, grid).calls
    cm = price_carr_madan(model, market, req, grid, cfg, enforce_alpha=enforce_alpha).calls
    quotes = []
    for a, c in zip(at, cm):
        gap = abs(a - c)
        if not (math.isfinite(gap) and gap < tol):
            raise AgreementFailure(gap, (float(a), float(c)), tol)
        quotes.append(ReferenceQuote(value=float(0.5 * (a + c)), source="dual_method", agreement=float(gap)))
    return quotes


def dual_method_reference(model, market, k: float, t: float, domain: float, n: int, **kwargs) -> ReferenceQuote:
    return dual_method_references(model, market, [k], t, domain, n, **kwargs)[0]


def params_hash(model: ModelParams, market: MarketParams, recipe: dict | None = None) -> str:
    doc = {
        "model": model.tag,
        "params": model_to_dict(model),
        "market": {"s0": market.s0, "r": market.r},
        "recipe": recipe or {},
    }
    blob = json.dumps(doc, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


class ReferenceCache:
    """Append-only CSV store of reference quotes keyed by (model, params_hash, k, t).

    The file lives in ``$FP_CACHE_DIR`` (default ``~/.cache/fpbench``).
    """

    HEADER = ["model", "params_hash", "k", "t", "value", "agreement", "source"]

    def __init__(self, path: str | Path | None = None):
        if path is None:
            root = os.environ.get("FP_CACHE_DIR") or Path.home() / ".cache" / "fpbench"
            path = Path(root) / "references.csv"
        self.path = Path(path)
        self._rows: dict[tuple, ReferenceQuote] = {}
        if self.path.exists():
            with open(self.path, newline="") as fh:
                for row in csv.DictReader(fh):
                    key = (row["model"], row["params_hash"], float(row["k"]), float(row["t"]))
                    agreement = float(row["agreement"]) if row["agreement"] else None
                    self._rows[key] = ReferenceQuote(float(row["value"]), row["source"], agreement)

    def get(self, model_tag: str, phash: str, k: float, t: float) -> ReferenceQuote | None:
        return self._rows.get((model_tag, phash, float(k), float(t)))

    def put(self, model_tag: str, phash: str, k: float, t: float, quote: ReferenceQuote) -> None:
        key = (model_tag, phash, float(k), float(t))
        if key in self._rows:
            return
        self._rows[key] = quote
        self.path.parent.mkdir(parents=True, exist_ok=True)
        new = not self.path.exists()
        with open(self.path, "a", newline="") as fh:
            writer = csv.writer(fh)
            if new:
                writer.writerow(self.HEADER)
            agreement = "" if quote.agreement is None else repr(float(quote.agreement))
            writer.writerow(
                [model_tag, phash, repr(float(k)), repr(float(t)), repr(float(quote.value)), agreement, quote.source]
            )

    def dual_method(self, model, market, strikes, t, domain, n, alpha=None) -> list[ReferenceQuote]:
        """Cached :func:`dual_method_references`."""
        phash = params_hash(model, market, {"domain": domain, "n": n, "alpha": alpha})
        cached = [self.get(model.tag, phash, k, t) for k in strikes]
        if all(q is not None for q in cached):
            return cached
        quotes = dual_method_references(model, market, strikes, t, domain, n, alpha=alpha)
        for k, q in zip(strikes, quotes):
            self.put(model.tag, phash, k, t, q)
        return quotes


def reference_prices(model, market, strikes, t, **recipe) -> np.ndarray:
    """Closed form for BSM, otherwise the dual-method oracle (``domain``, ``n``, ``alpha``)."""
    from .models import BsmParams

    if isinstance(model, BsmParams):
        return np.array([bsm_closed_form(market, model.sigma, k, t).value for k in strikes])
    return np.array([q.value for q in dual_method_references(model, market, strikes, t, **recipe)])
