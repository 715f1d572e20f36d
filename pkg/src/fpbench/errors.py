"""Exception hierarchy shared by every module."""


class PricingError(Exception):
    """Base class for all library errors."""


class InvalidParams(PricingError, ValueError):
    """Model, market or grid parameters violate their invariants."""


class NonFiniteResult(PricingError, ArithmeticError):
    """A characteristic-function evaluation overflowed or produced NaN."""


class NonFiniteIntegrand(PricingError, ArithmeticError):
    """A quadrature node evaluated to NaN or infinity."""


class BadLength(PricingError, ValueError):
    """FFT input length is not a power of two."""


class AlphaInfeasible(PricingError, ValueError):
    """Carr-Madan dampening parameter outside the admissible range."""

    def __init__(self, alpha: float, alpha_max: float | None):
        self.alpha = alpha
        self.alpha_max = alpha_max
        bound = None if alpha_max is None else repr(float(f"{alpha_max:.6g}"))
        if alpha != alpha:  # NaN: nothing was supplied
            msg = "an explicit alpha is required for this model"
            if bound is not None:
                msg += f": choose 0 < alpha < alpha_max={bound}"
        elif bound is None:
            msg = f"alpha={alpha:g} is not admissible"
        else:
            msg = f"alpha={alpha:g} is infeasible: requires 0 < alpha < alpha_max={bound}"
        super().__init__(msg)


class AgreementFailure(PricingError):
    """Two independent reference methods failed to agree."""

    def __init__(self, gap: float, values: tuple[float, float], tol: float):
        self.gap = gap
        self.values = values
        self.tol = tol
        super().__init__(
            f"reference methods disagree: {values[0]!r} vs {values[1]!r} (gap {gap:.3e} >= {tol:.0e})"
        )


class NoConvergence(PricingError):
    """A convergence search hit its cap without meeting the tolerance."""

    def __init__(self, message: str, best=None):
        self.best = best
        super().__init__(message)
