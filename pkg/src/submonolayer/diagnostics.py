"""Prefactor/remainder decomposition of the scaled source term and rate fits.

phi(tau + xi sqrt(tau), tau) = P(xi, tau) * (J1 + J2 + J3 + J4), where the
J_k integrate exp(-xi w^n - w^(2n)/2) against 1, f_n, g and f_n g over
w in [0, tau^(1/(2n))].  Each piece has a known large-tau rate; the
functions here compute the pieces and measure those rates.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .closedform import log_gamma_convolution, stirling_remainder
from .kinetics import TAU_ASYMP_MIN, MonomerTrajectory, fn_correction
from .model import InitialData, ModelParams, nu0
from .profiles import observable_factor, phi2, profile_cutoff
from .quadrature import QuadratureSpec, quad_finite


class DomainError(ValueError):
    """Argument outside the domain where a diagnostic quantity is defined."""


# ---------------------------------------------------------------------------
# prefactor and correction factor


def _log1p_excess(u: float) -> float:
    """u - (1 + u) log(1 + u) = -sum_{k>=2} (-u)^k / (k (k - 1)), series near 0."""
    if abs(u) < 0.1:
        acc, term = 0.0, u
        for k in range(2, 40):
            term = -term * u
            acc -= term / (k * (k - 1))
        return -acc
    return u - (1.0 + u) * math.log1p(u)


def log_prefactor_P(n: int, xi: float, tau: float) -> float:
    """log P, with z = tau + xi sqrt(tau) - n + 1 the Gamma argument.

    Stirling's series for log Gamma(z) cancels the O(tau log tau) terms
    analytically: log P = tau*(u - (1+u) log1p(u)) + log1p(u)/2 - omega(z),
    u = (z - tau)/tau, omega the Binet remainder.  The textbook order
    (1/2) log 2 pi - tau + (z - 1/2) log tau - log Gamma(z) loses ~1e-7 at tau = 1e8.
    """
    z = tau + xi * math.sqrt(tau) - n + 1.0
    if not z > 0:
        raise DomainError(f"P needs tau + xi sqrt(tau) - n + 1 > 0 (tau={tau}, xi={xi})")
    u = (z - tau) / tau
    return tau * _log1p_excess(u) + 0.5 * math.log1p(u) - stirling_remainder(z)


def log_prefactor_P_direct(n: int, xi: float, tau: float) -> float:
    """Textbook evaluation order of log P, kept as an independent cross-check."""
    z = tau + xi * math.sqrt(tau) - n + 1.0
    if not z > 0:
        raise DomainError(f"P needs tau + xi sqrt(tau) - n + 1 > 0 (tau={tau}, xi={xi})")
    return 0.5 * math.log(2 * math.pi) - tau + (z - 0.5) * math.log(tau) - float(gammaln(z))


def prefactor_P(n: int, xi: float, tau: float) -> float:
    """sqrt(2 pi) e^-tau tau^(y-n+1/2) / Gamma(y-n+1) with y = tau + xi sqrt(tau)."""
    return math.exp(log_prefactor_P(n, xi, tau))


def _log1p_tail(r: np.ndarray, order: int) -> np.ndarray:
    """log(1-r) + sum_{k<order} r^k/k, i.e. -sum_{k>=order} r^k/k, accurate for small r."""
    r = np.asarray(r, dtype=float)
    out = np.empty_like(r)
    small = r < 0.1
    rs = r[small]
    acc = np.zeros_like(rs)
    term = rs ** order
    for k in range(order, order + 40):
        acc += term / k
        term = term * rs
    out[small] = -acc
    rb = r[~small]
    with np.errstate(divide="ignore"):
        direct = np.log1p(-rb)
    for k in range(1, order):
        direct = direct + rb ** k / k
    out[~small] = direct
    return out


def g_exponent(n: int, w, tau: float, xi: float) -> np.ndarray:
    """q with g = expm1(q); q = theta^2 L3(r) + xi theta L2(r) - n log(1-r), r = w^n/theta."""
    w = np.asarray(w, dtype=float)
    theta = math.sqrt(tau)
    r = w ** n / theta
    if np.any(r >= 1) or np.any(w < 0):
        raise DomainError("g needs 0 <= w < tau^(1/(2n))")
    L2 = _log1p_tail(r, 2)
    L3 = _log1p_tail(r, 3)
    return theta * theta * L3 + xi * theta * L2 - n * np.log1p(-r)


def g_factor(n: int, w, tau: float, xi: float):
    """g(w, tau, xi) = -1 + (1 - w^n/sqrt(tau))^(tau+xi sqrt(tau)-n) exp(w^n sqrt(tau) + xi w^n + w^(2n)/2)."""
    val = np.expm1(g_exponent(n, w, tau, xi))
    return float(val) if np.ndim(w) == 0 else val


def g_bound_point(n: int, xi: float, k_max: int = 2000) -> float:
    """x_*(xi) = sup_k of the larger root of x^2/(k+3) + xi x/(k+2) - n/(k+1); |g| <= 1 beyond."""
    k = np.arange(0, k_max + 1, dtype=float)
    a = (k + 3) / (2 * (k + 2))
    roots = -a * xi + np.sqrt(a * a * xi * xi + (k + 3) / (k + 1) * n)
    return float(np.max(roots))


# ---------------------------------------------------------------------------
# the four contributions


def _fn_values(source, params: ModelParams, targs: np.ndarray) -> np.ndarray:
    """f_n at targs; the asymptotic backend falls back to the trajectory below its threshold."""
    if isinstance(source, tuple):
        traj, _ = source
        out = np.empty_like(targs)
        big = targs >= TAU_ASYMP_MIN
        out[big] = fn_correction("asymptotic", params, targs[big])
        if np.any(~big):
            out[~big] = fn_correction(traj, params, targs[~big])
        return out
    return fn_correction(source, params, targs)


def J_term(k: int, n: int, xi: float, tau: float, traj: MonomerTrajectory | None = None,
           spec: QuadratureSpec | None = None, params: ModelParams | None = None,
           fn_backend: str = "trajectory") -> float:
    """J_k(xi, tau): integral over [0, tau^(1/(2n))] of exp(-xi w^n - w^(2n)/2) times
    1 (k=1), f_n(w^n sqrt(tau)) (k=2), g (k=3) or f_n g (k=4).
    """
    if k not in (1, 2, 3, 4):
        raise ValueError("k must be 1, 2, 3 or 4")
    if not tau > 0:
        raise DomainError("tau must be positive")
    spec = spec or QuadratureSpec(rel_tol=1e-11, abs_tol=1e-300, max_subdivisions=20000)
    if params is None:
        params = traj.params if traj is not None and traj.params is not None else ModelParams(n)
    if k in (2, 4):
        if traj is None:
            raise ValueError("J_2 and J_4 need a monomer trajectory")
        if tau > traj.tau_max * (1 + 1e-13):
            raise DomainError(f"tau = {tau} beyond trajectory range {traj.tau_max}")
        source = traj if fn_backend == "trajectory" else (traj, "asymptotic")
    theta = math.sqrt(tau)
    upper = tau ** (1.0 / (2 * n))
    hi = min(upper, profile_cutoff(n, xi))
    # stay strictly inside the domain of g
    if k in (3, 4) and hi >= upper:
        hi = upper * (1 - 1e-15)

    def f(w):
        wn = w ** n
        weight = np.exp(-xi * wn - 0.5 * wn * wn)
        if k == 1:
            return weight
        if k in (2, 4):
            targs = np.minimum(wn * theta, tau)
            fac = _fn_values(source, params, targs)
            weight = weight * fac
        if k in (3, 4):
            weight = weight * g_factor(n, w, tau, xi)
        return weight

    breaks = []
    if xi < 0:
        breaks.append((-xi) ** (1.0 / n))
    if k in (2, 4):
        # f_n switches from -1 to its decaying tail around w^n sqrt(tau) ~ 1 .. 100
        for e in range(0, int(math.log10(max(tau, 1.0))) + 1):
            breaks.append((10.0 ** e / theta) ** (1.0 / n))
    breaks += list(np.linspace(0.0, hi, 8)[1:-1])
    val, _ = quad_finite(f, 0.0, hi, spec, breakpoints=[b for b in breaks if 0 < b < hi])
    return val


def log_J1_tail(n: int, xi: float, tau: float, spec: QuadratureSpec | None = None) -> float:
    """log of int_{tau^(1/(2n))}^inf exp(-xi w^n - w^(2n)/2) dw, i.e. log(J1_inf - J1)."""
    spec = spec or QuadratureSpec(rel_tol=1e-10, abs_tol=1e-300)
    T = tau ** (1.0 / (2 * n))
    base = math.sqrt(tau) + xi
    if base <= 0:
        raise DomainError("tail estimate needs sqrt(tau) + xi > 0")
    # integrand relative to its value at the left end, where it is maximal
    ref = -0.5 * base * base

    def f(w):
        wn = w ** n
        return np.exp(-0.5 * (wn + xi) ** 2 - ref)

    # width: the exponent drops by ~ base * n T^(n-1) per unit w
    width = 60.0 / (base * n * T ** (n - 1)) + 1e-12
    val, _ = quad_finite(f, T, T + width, spec)
    return ref + 0.5 * xi * xi + math.log(val)


def phi_continuous(x: float, tau: float, params: ModelParams, traj: MonomerTrajectory,
                   spec: QuadratureSpec | None = None) -> float:
    """phi(x, tau): scaled source term at real cluster size x > n - 1."""
    n = params.n
    if not x > n - 1:
        raise DomainError("phi needs x > n - 1")
    if x < n:
        # s^(x-n) is integrable but singular at 0; the kernel window handles a >= 0 only
        raise DomainError("phi is implemented for x >= n")
    spec = spec or QuadratureSpec(rel_tol=1e-11, abs_tol=1e-14)
    log_val = log_gamma_convolution(x - n, tau, traj, n, spec)
    return float(observable_factor(params, tau)) * math.exp(log_val)


def decomposition(xi: float, tau: float, params: ModelParams, traj: MonomerTrajectory,
                  spec: QuadratureSpec | None = None, fn_backend: str = "trajectory") -> dict:
    """Both sides of phi(tau + xi sqrt(tau), tau) = P * (J1 + J2 + J3 + J4)."""
    n = params.n
    x = tau + xi * math.sqrt(tau)
    phi = phi_continuous(x, tau, params, traj)
    P = prefactor_P(n, xi, tau)
    J = [J_term(k, n, xi, tau, traj, spec, params, fn_backend) for k in (1, 2, 3, 4)]
    rhs = P * math.fsum(J)
    return {"xi": xi, "tau": tau, "phi": phi, "P": P, "J": J, "rhs": rhs,
            "rel_gap": abs(phi - rhs) / abs(phi)}


# ---------------------------------------------------------------------------
# rate fits


@dataclass(frozen=True)
class RateFit:
    exponent: float
    amplitude: float
    r_squared: float
    with_log_correction: bool
    points_used: int

    def as_dict(self) -> dict:
        return asdict(self)


def fit_rate(points: Sequence[tuple[float, float]], with_log: bool = False) -> RateFit:
    """Least-squares fit of log value = log amplitude + exponent * log scale.

    With ``with_log`` the values are first divided by log(scale).
    """
    pts = [(float(s), float(v)) for s, v in points]
    if len(pts) < 3:
        raise ValueError("fit_rate needs at least 3 points")
    s = np.array([p[0] for p in pts])
    v = np.array([p[1] for p in pts])
    if np.any(np.diff(s) <= 0):
        raise ValueError("scales must be strictly increasing")
    if np.any(v <= 0) or np.any(s <= 0):
        raise DomainError("fit_rate needs positive scales and values")
    if with_log:
        if np.any(s <= 1):
            raise DomainError("log correction needs scales > 1")
        v = v / np.log(s)
    X = np.log(s)
    Y = np.log(v)
    slope, intercept = np.polyfit(X, Y, 1)
    resid = Y - (slope * X + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(((Y - Y.mean()) @ (Y - Y.mean())))
    if ss_tot <= 1e-28 * max(1.0, float(Y @ Y)):
        r2 = 1.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    if abs(slope) < 1e-12:
        slope = 0.0
    return RateFit(exponent=float(slope), amplitude=float(math.exp(intercept)), r_squared=r2,
                   with_log_correction=bool(with_log), points_used=len(pts))


def drop_first_decade(scales: Sequence[float]) -> list[int]:
    """Indices of grid points at least one decade above the smallest scale."""
    s0 = min(scales)
    keep = [i for i, s in enumerate(scales) if s >= 10.0 * s0 * (1 - 1e-12)]
    return keep


@dataclass
class RateCheck:
    name: str
    expected: str
    scales: list
    values: list
    fit: dict | None
    verdict: str
    note: str = ""
    extra: dict = field(default_factory=dict)


def _verdict_in(fit: RateFit | None, lo: float, hi: float, min_r2: float = 0.9) -> str:
    if fit is None:
        return "fail"
    return "pass" if lo <= fit.exponent <= hi and fit.r_squared >= min_r2 else "fail"


def check_lemma_rates(n: int, xi: float, tau_grid: Sequence[float], traj: MonomerTrajectory,
                      spec: QuadratureSpec | None = None, params: ModelParams | None = None,
                      data: InitialData | None = None, discard_first_decade: bool = True) -> dict:
    """Fitted large-tau rates of |P e^(xi^2/2) - 1|, the J1 tail, |J3|, |J4| and the J2 combination."""
    tau_grid = sorted(float(t) for t in tau_grid)
    if tau_grid[-1] < 1000 * tau_grid[0]:
        raise ValueError("tau_grid must span at least three decades")
    params = params or traj.params or ModelParams(n)
    alpha = params.alpha
    nu = nu0(data) if data is not None else 0.0
    idx = drop_first_decade(tau_grid) if discard_first_decade else list(range(len(tau_grid)))
    fit_scales = [tau_grid[i] for i in idx]

    def fitted(values, with_log=False):
        pts = [(tau_grid[i], values[i]) for i in idx]
        if len(pts) < 3 or any(v <= 0 for _, v in pts):
            return None
        return fit_rate(pts, with_log)

    checks = []

    p_vals = [abs(prefactor_P(n, xi, t) * math.exp(0.5 * xi * xi) - 1.0) for t in tau_grid]
    fit = fitted(p_vals)
    checks.append(RateCheck("P", "exponent -1/2", tau_grid, p_vals, fit and fit.as_dict(),
                             _verdict_in(fit, -0.6, -0.4)))

    j1_inf = math.exp(0.5 * xi * xi) * phi2(n, xi)
    tails = [log_J1_tail(n, xi, t) for t in tau_grid]
    floor = 1e-14 * j1_inf
    below = all(lt < math.log(floor) for lt in tails[1:]) if len(tails) > 1 else True
    slope = float(np.polyfit(np.log(tau_grid), tails, 1)[0])
    checks.append(RateCheck(
        "J1", "super-polynomial (tail ~ exp(-tau/2))", tau_grid, [f"exp({lt:.6g})" for lt in tails],
        None, "below floor" if below else ("pass" if slope < -2 else "fail"),
        note=f"log-tail slope vs log tau: {slope:.4g}",
        extra={"log_tail": tails, "bound_xi_nonneg": [math.log(1.0 / n) - t / 2 for t in tau_grid]}))

    j3 = [abs(J_term(3, n, xi, t, traj, spec, params)) for t in tau_grid]
    fit = fitted(j3)
    checks.append(RateCheck("J3", "exponent -1/2", tau_grid, j3, fit and fit.as_dict(),
                             _verdict_in(fit, -0.65, -0.35)))

    j4 = [abs(J_term(4, n, xi, t, traj, spec, params)) for t in tau_grid]
    fit = fitted(j4)
    checks.append(RateCheck("J4", "exponent -1/2", tau_grid, j4, fit and fit.as_dict(),
                             _verdict_in(fit, -0.65, -0.35)))

    const = nu * (n / alpha) ** ((n - 1) / n)
    j2 = [abs(n * t ** (1.0 / (2 * n)) * J_term(2, n, xi, t, traj, spec, params) + const)
          for t in tau_grid]
    fit = fitted(j2, with_log=True)
    bound = -(0.5 - 1.0 / (2 * n))
    checks.append(RateCheck("J2", f"exponent <= {bound:.4g} (log-corrected)", tau_grid, j2,
                             fit and fit.as_dict(),
                             "pass" if fit is not None and fit.exponent <= bound + 0.1 else "fail"))

    return {"n": n, "xi": xi, "alpha": alpha, "nu0": nu, "fit_scales": fit_scales,
            "checks": [asdict(c) for c in checks]}


def final_constant_series(xi: float, tau_grid: Sequence[float], params: ModelParams,
                         traj: MonomerTrajectory, data: InitialData,
                         spec: QuadratureSpec | None = None) -> dict:
    """tau^(1/(2n)) (phi - Phi_{2,n}) against its limit -e^(-xi^2/2) (alpha/n)^(1/n) nu0/alpha."""
    n, alpha = params.n, params.alpha
    nu = nu0(data)
    target = -math.exp(-0.5 * xi * xi) * (alpha / n) ** (1.0 / n) * nu / alpha
    p2 = phi2(n, xi)
    values = []
    for t in tau_grid:
        phi = phi_continuous(t + xi * math.sqrt(t), t, params, traj, spec)
        values.append(t ** (1.0 / (2 * n)) * (phi - p2))
    dev = [abs(v - target) / abs(target) if target != 0 else abs(v) for v in values]
    monotone = all(b <= a for a, b in zip(dev, dev[1:]))
    return {"xi": xi, "nu0": nu, "target": target, "tau": list(tau_grid), "values": values,
            "rel_deviation": dev, "monotone_approach": monotone}
