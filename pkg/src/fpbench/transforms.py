"""Numerical kernels: truncated trapezoidal quadrature and an iterative radix-2 FFT."""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import BadLength, InvalidParams, NonFiniteIntegrand

__all__ = ["FourierGrid", "fft", "trapezoid"]


@dataclass(frozen=True)
class FourierGrid:
    """Equidistant frequency grid on ``(0, w_max]``.

    The ``n`` nodes sit at ``j * dw`` for ``j = 1..n`` with ``dw = w_max / n``.
    Quadrature closes the interval at ``w = 0`` with a half-weighted origin
    term whose value the caller supplies as a limit, so singular integrands are
    never evaluated there.
    """

    w_max: float
    n: int

    def __post_init__(self):
        if not (math.isfinite(self.w_max) and self.w_max > 0):
            raise InvalidParams(f"w_max must be positive, got {self.w_max!r}")
        if int(self.n) != self.n or self.n < 2:
            raise InvalidParams(f"node count must be an integer >= 2, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def dw(self) -> float:
        return self.w_max / self.n

    @property
    def nodes(self) -> np.ndarray:
        return self.dw * np.arange(1, self.n + 1)

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid weights for ``[0, *nodes]``: ``[dw/2, dw, ..., dw, dw/2]``."""
        w = np.full(self.n + 1, self.dw)
        w[0] = w[-1] = 0.5 * self.dw
        return w


def trapezoid(f: Callable[[np.ndarray], np.ndarray], grid: FourierGrid, at_zero: float | None = None) -> float:
    """Trapezoid rule for ``f`` over ``[0, grid.w_max]``.

    ``f`` is called once on the node array. ``at_zero`` is the value (or limit)
    of the integrand at the origin; when omitted ``f(0.0)`` is used.
    """
    values = np.asarray(f(grid.nodes), dtype=float)
    origin = float(f(np.zeros(1))[0]) if at_zero is None else float(at_zero)
    if not (np.all(np.isfinite(values)) and math.isfinite(origin)):
        bad = np.flatnonzero(~np.isfinite(values))
        where = f"w={grid.nodes[bad[0]]:g}" if bad.size else "w=0"
        raise NonFiniteIntegrand(f"integrand is not finite at {where}")
    w = grid.weights
    return float(w[0] * origin + w[1:] @ values)


@functools.lru_cache(maxsize=64)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@functools.lru_cache(maxsize=64)
def _twiddles(n: int) -> tuple[np.ndarray, ...]:
    # One table per butterfly stage, each entry computed directly (no recurrence drift).
    out = []
    size = 2
    while size <= n:
        out.append(np.exp(-2j * np.pi * np.arange(size // 2) / size))
        size *= 2
    return tuple(out)


def fft(x) -> np.ndarray:
    """Discrete Fourier transform ``y[m] = sum_n exp(-2 pi i m n / N) x[n]``.

    Iterative decimation-in-time: bit-reversal permutation followed by
    ``log2 N`` vectorized butterfly stages.
    """
    x = np.asarray(x, dtype=complex)
    if x.ndim != 1:
        raise BadLength("fft expects a one-dimensional series")
    n = x.size
    if n < 1 or n & (n - 1):
        raise BadLength(f"length must be a power of 2, got {n}")
    y = x[_bit_reversal(n)]
    size = 2
    for tw in _twiddles(n):
        half = size // 2
        blocks = y.reshape(-1, size)
        even = blocks[:, :half]
        odd = blocks[:, half:]
        odd *= tw
        even += odd
        # odd <- even_old - odd*tw, using even_new = even_old + odd*tw
        odd *= -2.0
        odd += even
        size *= 2
    return y
