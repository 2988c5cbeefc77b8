"""Similarity profiles Phi_{1,n}, Phi_{2,n} and the rescaled cluster observable."""

from __future__ import annotations

import math

import numpy as np

from .model import ModelParams
from .quadrature import QuadratureSpec, quad_finite

# integrand tail is cut where it has dropped by e^-40 (< 1e-17) from its maximum
PROFILE_LOG_DROP = 40.0


class SingularDirectionError(ValueError):
    """eta = 1 is the critical direction, resolved by Phi_{2,n} instead."""


def phi1(n: int, eta: float) -> float:
    """(1 - eta)^(-(n-1)/n) for 0 < eta < 1, zero for eta > 1."""
    if not eta > 0:
        raise ValueError("phi1 needs eta > 0")
    if eta == 1:
        raise SingularDirectionError("phi1 is singular at eta = 1")
    if eta > 1:
        return 0.0
    return (1.0 - eta) ** (-(n - 1) / n)


def profile_cutoff(n: int, xi: float, drop: float = PROFILE_LOG_DROP) -> float:
    """W with exp(|xi| w^n - w^(2n)/2)-type tails below e^-drop of the maximum past W.

    The integrand is exp(-(w^n + xi)^2 / 2); past w^n = max(0, -xi) + sqrt(2 drop)
    it has fallen by at least e^-drop relative to its peak.
    """
    return (max(0.0, -xi) + math.sqrt(2.0 * drop)) ** (1.0 / n)


def _log_profile_integral(n: int, xi: float, upper: float | None, spec: QuadratureSpec):
    """log int_0^upper exp(-(w^n + xi)^2/2) dw (upper=None: certified cutoff)."""
    W = profile_cutoff(n, xi)
    hi = W if upper is None else min(upper, W)
    # normalise by the integrand maximum on [0, inf)
    log_max = -0.5 * xi * xi if xi > 0 else 0.0

    def f(w):
        wn = w ** n
        return np.exp(-0.5 * (wn + xi) ** 2 - log_max)

    breaks = [(-xi) ** (1.0 / n)] if xi < 0 else []
    val, _ = quad_finite(f, 0.0, hi, spec, breakpoints=breaks + list(np.linspace(0, hi, 6)[1:-1]))
    return log_max + math.log(val)


def phi2(n: int, xi: float, spec: QuadratureSpec | None = None) -> float:
    """Phi_{2,n}(xi) = e^(-xi^2/2) int_0^inf exp(-xi w^n - w^(2n)/2) dw.

    Evaluated as int_0^W exp(-(w^n + xi)^2 / 2) dw, the same integrand with
    the Gaussian prefactor absorbed, so no intermediate overflows at xi = -6.
    """
    if n < 2:
        raise ValueError("phi2 needs n >= 2")
    spec = spec or QuadratureSpec(rel_tol=1e-12, abs_tol=1e-300)
    return math.exp(_log_profile_integral(n, float(xi), None, spec))


def phi2_at_zero(n: int) -> float:
    """Closed form Phi_{2,n}(0) = 2^(1/(2n)) Gamma(1/(2n)) / (2n)."""
    return 2.0 ** (1.0 / (2 * n)) * math.gamma(1.0 / (2 * n)) / (2 * n)


def observable_factor(params: ModelParams, tau):
    """(sqrt(2 pi)/alpha) (alpha/n)^(1/n) tau^((n-1)/(2n))."""
    n, alpha = params.n, params.alpha
    return math.sqrt(2.0 * math.pi) / alpha * (alpha / n) ** (1.0 / n) * np.asarray(tau, dtype=float) ** ((n - 1) / (2.0 * n))


def scaled_observable(params: ModelParams, j: int, tau: float, c_val: float) -> float:
    """F = (sqrt(2 pi)/alpha)(alpha/n)^(1/n) tau^((n-1)/(2n)) c~_j(tau); converges to Phi_{2,n}(xi)."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    if c_val < 0:
        raise ValueError("concentration must be >= 0")
    return float(observable_factor(params, tau)) * c_val


def profile_table(n_values, xi_grid, spec: QuadratureSpec | None = None) -> list[tuple[float, int, float]]:
    """Rows (xi, n, Phi_{2,n}(xi)) ordered by n then xi."""
    return [(float(xi), int(n), phi2(n, xi, spec)) for n in n_values for xi in xi_grid]


def profile_grid(step: float = 0.05, lo: float = -6.0, hi: float = 4.0) -> np.ndarray:
    count = int(round((hi - lo) / step)) + 1
    return np.round(lo + step * np.arange(count), 10)
