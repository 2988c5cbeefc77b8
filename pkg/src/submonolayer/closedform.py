"""Exact representation c~_j = I1 + I2, scaling geometry and the split sums.

Everything Poisson- or Gamma-shaped is evaluated in log space: at j ~ 1e4
the individual factors tau^m / m! overflow long before their products do.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln

from .kinetics import MonomerTrajectory, TrajectoryRangeError
from .model import InitialData, ModelParams, PowerLaw
from .quadrature import QuadratureSpec, quad_finite

# kernel values more than e^-50 below the peak are dropped from the window
KERNEL_LOG_DROP = 50.0


class DegenerateGeometryError(ValueError):
    """xi too large for j: the induced tau would fall below the critical size."""


class ApplicabilityError(ValueError):
    """Operation defined only for a particular kind of initial data."""


# ---------------------------------------------------------------------------
# scaling geometry


def delta_j(xi: float, j: float, n: int | None = None) -> float:
    """Factor Delta_j(xi) with tau = j * Delta_j solving tau + xi sqrt(tau) = j.

    With ``n`` given, xi > 0 is restricted to xi <= sqrt(j) (1 - n/j).
    """
    if j < 1:
        raise ValueError("delta_j needs j >= 1")
    if n is not None and xi > 0 and xi > math.sqrt(j) * (1.0 - n / j):
        raise DegenerateGeometryError(f"xi = {xi} too large for j = {j} (n = {n})")
    if xi == 0:
        return 1.0
    a = xi * xi / (4.0 * j)
    s = math.sqrt(1.0 + a) + math.sqrt(a)
    # (sqrt(1+a) - sqrt(a))^2 written as 1/(sqrt(1+a) + sqrt(a))^2 to avoid cancellation
    return 1.0 / (s * s) if xi > 0 else s * s


def j_star(j: float, xi: float, n: int) -> float:
    """Cut-off (j - n) - (1 + |xi|) sqrt(j - n) between the small- and large-l sums."""
    if j <= n:
        raise ValueError("j_star needs j > n")
    return (j - n) - (1.0 + abs(xi)) * math.sqrt(j - n)


@dataclass(frozen=True)
class ScalingPoint:
    j: int
    xi: float
    tau: float
    delta: float


def scaling_point(j: int, xi: float, n: int | None = None) -> ScalingPoint:
    d = delta_j(xi, j, n)
    return ScalingPoint(j=int(j), xi=float(xi), tau=j * d, delta=d)


def tau_from_xi(j: float, xi: float) -> float:
    return j * delta_j(xi, j)


# ---------------------------------------------------------------------------
# log-space helpers


_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def stirling_remainder(m):
    """log Gamma(m) - (m - 1/2) log m + m - log(2 pi)/2 for real m > 0 (Binet's function)."""
    scalar = np.ndim(m) == 0
    m = np.atleast_1d(np.asarray(m, dtype=float))
    out = np.empty_like(m)
    small = m <= 15
    ms = m[small]
    out[small] = gammaln(ms + 1.0) - (ms + 0.5) * np.log(ms) + ms - _HALF_LOG_2PI
    mb = m[~small]
    mm = mb * mb
    out[~small] = (1 / 12 - (1 / 360 - (1 / 1260 - (1 / 1680 - 1 / (1188 * mm)) / mm) / mm) / mm) / mb
    return float(out[0]) if scalar else out


def _deviance(m: np.ndarray, tau: float) -> np.ndarray:
    """m log(m/tau) + tau - m, accurate when m is close to tau."""
    out = m * (np.log(m) - math.log(tau)) + tau - m
    near = np.abs(m - tau) < 0.1 * (m + tau)
    if np.any(near):
        x = m[near]
        v = (x - tau) / (x + tau)
        acc = (x - tau) * v
        term = 2.0 * x * v
        v2 = v * v
        for k in range(1, 60):
            term = term * v2
            acc = acc + term / (2 * k + 1)
        out[near] = acc
    return out


def poisson_weight_log(m, tau: float):
    """log(e^-tau tau^m / m!) for integer m >= 0 and tau > 0.

    Written as -stirling_error(m) - deviance(m, tau) - log(2 pi m)/2, so
    the O(m log m) pieces cancel analytically instead of in floating point.
    """
    m_arr = np.atleast_1d(np.asarray(m, dtype=float))
    val = np.full(m_arr.shape, -float(tau))
    pos = m_arr > 0
    if np.any(pos):
        mp = m_arr[pos]
        val[pos] = -stirling_remainder(mp) - _deviance(mp, tau) - _HALF_LOG_2PI - 0.5 * np.log(mp)
    return float(val[0]) if np.ndim(m) == 0 else val.reshape(np.shape(m))


def log_sum(logs: np.ndarray) -> float:
    """log(sum(exp(logs))) with a compensated inner sum; -inf for empty input."""
    logs = np.asarray(logs, dtype=float)
    if logs.size == 0:
        return -math.inf
    top = float(np.max(logs))
    if top == -math.inf:
        return -math.inf
    return top + math.log(math.fsum(np.exp(logs - top).tolist()))


def _log_ratio(s, s_pk):
    """log(s / s_pk), via log1p near the peak."""
    r = s / s_pk
    return math.log1p((s - s_pk) / s_pk) if r > 0.5 else math.log(r)


def _kernel_window(a: float, tau: float, drop: float = KERNEL_LOG_DROP) -> tuple[float, float, float]:
    """Peak and support window of s -> s^a e^-s on [0, tau].

    Returns (s_peak, s_lo, s_hi) with the log kernel at least ``drop`` below
    its maximum outside [s_lo, s_hi].
    """
    s_pk = min(a, tau)
    if a == 0:
        return 0.0, 0.0, min(tau, drop)

    def rel(s):
        d = s - s_pk
        return a * _log_ratio(s, s_pk) - d + drop

    if s_pk <= 0:
        return 0.0, 0.0, 0.0
    lo_probe = s_pk * math.exp(-(drop + s_pk) / a) if a > 0 else 0.0
    s_lo = 0.0 if rel(max(lo_probe, 1e-300)) >= 0 else brentq(rel, max(lo_probe, 1e-300), s_pk, xtol=1e-12 * s_pk)
    if s_pk >= tau or rel(tau) >= 0:
        s_hi = tau
    else:
        s_hi = brentq(rel, s_pk, tau, xtol=1e-12 * tau)
    return s_pk, s_lo, s_hi


def log_gamma_convolution(a: float, tau: float, traj: MonomerTrajectory, n: int,
                          spec: QuadratureSpec | None = None) -> float:
    """log of (1/Gamma(a+1)) int_0^tau c1~(tau - s)^(n-1) s^a e^-s ds, for real a >= 0.

    The integral runs in v = sqrt(tau - s): c1~ is a smooth spline in v, and
    the square-root behaviour of a bare start at s = tau disappears.
    """
    spec = spec or QuadratureSpec()
    if a < 0:
        raise ValueError("gamma convolution needs a >= 0")
    if tau < 0:
        raise ValueError("tau must be >= 0")
    if tau > traj.tau_max * (1 + 1e-13):
        raise TrajectoryRangeError(f"tau = {tau} beyond trajectory range {traj.tau_max}")
    tau = min(tau, traj.tau_max)
    if tau == 0:
        return -math.inf

    s_pk, s_lo, s_hi = _kernel_window(a, tau)
    if s_hi <= s_lo:
        return -math.inf
    if a == 0:
        log_peak = 0.0
    else:
        log_peak = a * math.log(s_pk) - s_pk - float(gammaln(a + 1.0))
    p = n - 1

    def integrand(v):
        s = tau - v * v
        if a == 0:
            rel = -s
        else:
            d = s - s_pk
            with np.errstate(divide="ignore", invalid="ignore"):
                r = s / s_pk
                lr = np.where(r > 0.5, np.log1p(d / s_pk), np.log(np.maximum(r, 0.0)))
                rel = np.where(s > 0, a * lr - d, -np.inf)
        return 2.0 * v * traj.c1_of_u(v) ** p * np.exp(rel)

    v_lo = math.sqrt(max(tau - s_hi, 0.0))
    v_hi = math.sqrt(tau - s_lo)
    # seed panels around the kernel peak so narrow peaks are never missed
    seeds = np.linspace(v_lo, v_hi, 9)[1:-1]
    if s_lo < s_pk < s_hi:
        seeds = np.append(seeds, math.sqrt(tau - s_pk))
    val, _ = quad_finite(integrand, v_lo, v_hi, spec, breakpoints=seeds)
    if val <= 0:
        return -math.inf
    return log_peak + math.log(val)


# ---------------------------------------------------------------------------
# the exact representation


def log_I1(j: int, tau: float, data: InitialData) -> float:
    if j < data.n:
        raise ValueError("I1 needs j >= n")
    k, c = data.support(j)
    if k.size == 0:
        return -math.inf
    if tau == 0:
        c_j = data.c0(j)
        return math.log(c_j) if c_j > 0 else -math.inf
    logs = poisson_weight_log(j - k, tau) + np.log(c)
    return log_sum(logs)


def I1(j: int, tau: float, data: InitialData) -> float:
    """Initial-data part e^-tau sum_{k=n}^{j} tau^(j-k)/(j-k)! c_k(0)."""
    if tau == 0:
        return data.c0(j)
    return math.exp(log_I1(j, tau, data))


def I2(j: int, tau: float, traj: MonomerTrajectory, quad: QuadratureSpec | None = None,
       n: int | None = None) -> float:
    """Source part (1/(j-n)!) int_0^tau c1~(tau-s)^(n-1) s^(j-n) e^-s ds."""
    n = _resolve_n(traj, n)
    if j < n:
        raise ValueError("I2 needs j >= n")
    return math.exp(log_gamma_convolution(float(j - n), tau, traj, n, quad))


def c_tilde(j: int, tau: float, data: InitialData, traj: MonomerTrajectory,
            quad: QuadratureSpec | None = None) -> float:
    """c~_j(tau) = I1(j, tau) + I2(j, tau)."""
    return I1(j, tau, data) + I2(j, tau, traj, quad, n=data.n)


def _resolve_n(traj: MonomerTrajectory, n: int | None) -> int:
    if n is not None:
        return int(n)
    if traj.params is None:
        raise ValueError("critical size n must be given for a synthetic trajectory")
    return traj.params.n


# ---------------------------------------------------------------------------
# split sums for power-law data


def _split_logs(j: int, xi: float, data: InitialData, params: ModelParams):
    if not isinstance(data.tail, PowerLaw):
        raise ApplicabilityError("S3/S4 are defined for power-law initial data only")
    if data.tail.K_cut < j:
        raise ApplicabilityError(f"K_cut = {data.tail.K_cut} must be >= j = {j}")
    n = params.n
    if j <= n:
        raise ValueError("S3/S4 need j > n")
    mu = data.tail.mu
    tau = j * delta_j(xi, j)
    ell = np.arange(0, j - n + 1, dtype=float)
    logs = ((n - 1) / (2.0 * n)) * math.log(tau) + poisson_weight_log(ell, tau) - mu * np.log(j - ell)
    return ell, logs, j_star(j, xi, n)


def S3(j: int, xi: float, data: InitialData, params: ModelParams) -> float:
    """Small-l part (l <= j*) of the scaled initial-data sum, constants dropped."""
    ell, logs, js = _split_logs(j, xi, data, params)
    return math.exp(log_sum(logs[ell <= js]))


def S4(j: int, xi: float, data: InitialData, params: ModelParams) -> float:
    """Large-l part (j* < l <= j - n) of the scaled initial-data sum."""
    ell, logs, js = _split_logs(j, xi, data, params)
    return math.exp(log_sum(logs[ell > js]))


def split_sum_total(j: int, xi: float, data: InitialData, params: ModelParams) -> float:
    _, logs, _ = _split_logs(j, xi, data, params)
    return math.exp(log_sum(logs))
