"""Generalized Scorer-type integral Hi_gamma and its large-x asymptotics.

Hi_gamma(x) = (1/pi) int_0^inf sigma^gamma exp(-sigma^3/3 + sigma x) dsigma.

For gamma = 0 this is the classical Scorer function Hi.  The quadrature
branch substitutes sigma = u^2 to remove the integrable endpoint
singularity for gamma in (-1, 0); the asymptotic branch is the saddle-point
expansion exp((2/3) x^{3/2}) x^{gamma/2 - 1/4} / sqrt(pi), optionally with
the next-order 1 + (gamma^2/4 - gamma/2 + 5/48) x^{-3/2} correction.
Ratios of two evaluations at large arguments are combined in log space to
avoid overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

X_SWITCH = 10.0
CROSSOVER_BAND = (8.0, 12.0)
_X_OVERFLOW = 59.0  # exp((2/3) x^{3/2}) overflows past this


class ScorerEvalError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScorerQuery:
    gamma: float
    x: float

    def __post_init__(self):
        if not self.gamma > -1.0:
            raise ValueError(f"need gamma > -1 for integrability, got {self.gamma}")


def _quadrature(gamma: float, x: float) -> float:
    if (2.0 / 3.0) * max(x, 0.0) ** 1.5 > 700.0:
        raise ScorerEvalError(
            f"x={x} too large for the quadrature branch (integrand overflows)"
        )
    sigma_peak = math.sqrt(x) if x > 1.0 else 1.0
    sigma_max = max(10.0, 2.5 * sigma_peak)
    u_peak = math.sqrt(sigma_peak)
    u_max = math.sqrt(sigma_max)

    def f(u):
        return 2.0 * u ** (2.0 * gamma + 1.0) * math.exp(-(u**6) / 3.0 + u * u * x)

    val, err = quad(f, 0.0, u_max, points=[u_peak], limit=400, epsabs=0.0, epsrel=1e-11)
    if not math.isfinite(val) or (val != 0.0 and err / abs(val) > 1e-8):
        raise ScorerEvalError(f"quadrature did not converge at gamma={gamma}, x={x}")
    return val / math.pi


def scorer_eval(q: ScorerQuery) -> float:
    """Hi_gamma(x) by adaptive quadrature (valid until the kernel overflows)."""
    return _quadrature(q.gamma, q.x)


def _log_asymptotic(gamma: float, x: float, corrected: bool) -> float:
    ln = (2.0 / 3.0) * x**1.5 + (0.5 * gamma - 0.25) * math.log(x) - 0.5 * math.log(math.pi)
    if corrected:
        c1 = 0.25 * gamma**2 - 0.5 * gamma + 5.0 / 48.0
        ln += math.log1p(c1 * x**-1.5)
    return ln


def scorer_asymptotic(q: ScorerQuery, corrected: bool = False) -> float:
    """Leading saddle-point term of Hi_gamma for large positive x."""
    if q.x <= 0.0:
        raise ScorerEvalError("asymptotic branch requires x > 0")
    ln = _log_asymptotic(q.gamma, q.x, corrected)
    if ln > 700.0:
        raise ScorerEvalError(f"asymptotic value overflows at x={q.x}")
    return math.exp(ln)


def _log_value(gamma: float, x: float) -> float:
    """log Hi_gamma(x), quadrature below the overflow bound, else asymptotic."""
    if x <= _X_OVERFLOW:
        return math.log(_quadrature(gamma, x))
    return _log_asymptotic(gamma, x, corrected=True)


def scorer_ratio(gamma: float, b: float, y: float) -> float:
    """Hi_gamma(b^{-2/3}(1-by)) / Hi_gamma(b^{-2/3}) for 0 <= y <= 1/b.

    Evaluated in log space so the exponentially large numerator and
    denominator never materialize.  The result lies in (0, 1] since
    Hi_gamma is increasing and 1 - by <= 1.
    """
    if not (0.0 < b < 1.0):
        raise ValueError(f"need 0 < b < 1, got {b}")
    if not (0.0 <= y <= 1.0 / b):
        raise ValueError(f"need 0 <= y <= 1/b, got y={y}")
    if y == 0.0:
        return 1.0
    x0 = b ** (-2.0 / 3.0)
    x1 = x0 * (1.0 - b * y)
    ln_num = math.log(_quadrature(gamma, x1)) if x1 <= _X_OVERFLOW else _log_asymptotic(
        gamma, x1, corrected=True
    )
    ln_den = _log_value(gamma, x0)
    out = math.exp(ln_num - ln_den)
    if not math.isfinite(out):
        raise ScorerEvalError(f"ratio overflow at gamma={gamma}, b={b}, y={y}")
    return out
