"""Monomer-bulk dynamics, the intrinsic clock tau(t), and truncated full solves.

The monomer concentration x = c_1 and the bulk y = sum_{j>=n} c_j obey a
closed planar system.  Integrating it (together with tau = int x dt) gives
c1~(tau) = x(t(tau)), which drives the linear triangular cluster hierarchy.

Integration is split: physical time t until tau reaches ``tau_switch``, then
tau itself as the independent variable (dt/dtau = 1/x), which reaches
tau ~ 1e6 in a few thousand steps.  Trajectory values are stored at nodes
and interpolated by cubic splines in u = sqrt(tau); in that variable
x is smooth even when x(0) = 0, where x ~ sqrt(2 alpha tau).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .model import InitialData, ModelParams, nu0

DEFAULT_TRAJECTORY_TOL = 1e-10
DEFAULT_FULL_TOL = 1e-8
TAU_ASYMP_MIN = 1e2


class HorizonError(RuntimeError):
    """The integrator did not reach the requested horizon within its step budget."""


class InstabilityError(RuntimeError):
    """A state component became non-finite (or unphysically negative)."""


class TrajectoryRangeError(ValueError):
    """tau outside the range covered by a trajectory."""


class AsymptoticDomainError(ValueError):
    """The two-term long-time formula was requested below its validity threshold."""


# ---------------------------------------------------------------------------
# trajectory container


@dataclass(frozen=True, eq=False)
class MonomerTrajectory:
    """Nodes (t, tau, x, y); ``c1`` interpolates x by a cubic spline in u = sqrt(tau).

    Slopes are taken from the node values, not from the vector field: on the
    slow manifold alpha - n x^n - x y is a cancellation of O(1) terms and
    carries almost no correct digits at large tau.
    """

    t: np.ndarray
    tau: np.ndarray
    x: np.ndarray
    y: np.ndarray
    params: ModelParams | None = None
    degree: int = 3
    _spline: CubicSpline = field(init=False, repr=False)

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        if tau.ndim != 1 or tau.size < 2:
            raise ValueError("a trajectory needs at least two nodes")
        if tau[0] != 0.0 or np.any(np.diff(tau) <= 0):
            raise ValueError("trajectory tau must start at 0 and increase strictly")
        u = np.sqrt(tau)
        bc = "not-a-knot" if tau.size > 3 else "natural"
        object.__setattr__(self, "_spline", CubicSpline(u, self.x, bc_type=bc))

    @property
    def tau_max(self) -> float:
        return float(self.tau[-1])

    @property
    def u(self) -> np.ndarray:
        return np.sqrt(self.tau)

    def c1(self, tau):
        """Interpolated c1~(tau); accepts scalars or arrays."""
        tau_arr = np.asarray(tau, dtype=float)
        if np.any(tau_arr < 0) or np.any(tau_arr > self.tau_max * (1 + 1e-13)):
            raise TrajectoryRangeError(
                f"tau outside trajectory range [0, {self.tau_max}]")
        val = self._spline(np.sqrt(np.clip(tau_arr, 0.0, self.tau_max)))
        return float(val) if np.ndim(tau) == 0 else val

    def c1_of_u(self, u: np.ndarray) -> np.ndarray:
        """c1~ as a function of u = sqrt(tau); no range check (hot path)."""
        return self._spline(u)

    @classmethod
    def constant(cls, kappa: float, tau_max: float) -> "MonomerTrajectory":
        """Synthetic trajectory with c1~ identically kappa (for oracle tests)."""
        tau = np.array([0.0, float(tau_max)])
        return cls(t=tau / kappa if kappa > 0 else tau, tau=tau,
                   x=np.full(2, float(kappa)), y=np.zeros(2))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "tau", "x", "y"])
            for row in zip(self.t, self.tau, self.x, self.y):
                writer.writerow([repr(float(v)) for v in row])


def c1_tilde(traj: MonomerTrajectory, tau):
    """c1~(tau) = x(t(tau)) by interpolation of the stored trajectory."""
    return traj.c1(tau)


# ---------------------------------------------------------------------------
# monomer-bulk solve


class _Budget:
    def __init__(self, max_evals: int, what: str):
        self.max_evals = max_evals
        self.count = 0
        self.what = what

    def tick(self):
        self.count += 1
        if self.count > self.max_evals:
            raise HorizonError(f"step budget exhausted while integrating {self.what}")


def _subdivide(ts: np.ndarray, min_pieces: int, max_rel: float | None, max_abs: float | None):
    """Refine the integrator's accepted step boundaries into interpolation nodes."""
    pieces = [ts[:1]]
    for a, b in zip(ts[:-1], ts[1:]):
        m = min_pieces
        if max_rel is not None and a > 0:
            m = max(m, int(math.ceil((b - a) / (max_rel * a))))
        if max_abs is not None:
            m = max(m, int(math.ceil((b - a) / max_abs)))
        pieces.append(np.linspace(a, b, m + 1)[1:])
    return np.concatenate(pieces)


def solve_monomer_bulk(params: ModelParams, data: InitialData, tau_target: float,
                       rel_tol: float = DEFAULT_TRAJECTORY_TOL, tau_switch: float = 1.0,
                       max_steps: int = 200_000, node_rel_spacing: float = 2.5e-3) -> MonomerTrajectory:
    """Integrate x' = alpha - n x^n - x y, y' = x^n and tau' = x up to tau_target."""
    if not tau_target > 0:
        raise ValueError("tau_target must be positive")
    if not (1e-14 < rel_tol < 1e-3):
        raise ValueError("rel_tol must lie in (1e-14, 1e-3)")
    n, alpha = params.n, params.alpha
    x0, y0 = float(data.c1_0), nu0(data)
    atol = rel_tol * 1e-4 * max(1.0, (alpha / n) ** (1.0 / n))
    budget = _Budget(13 * max_steps, f"monomer-bulk system to tau = {tau_target}")

    def rhs_t(t, s):
        budget.tick()
        x, y = s[0], s[1]
        xn = x ** n
        return [alpha - n * xn - x * y, xn, x]

    def jac_t(t, s):
        x, y = s[0], s[1]
        xn1 = x ** (n - 1)
        return [[-n * n * xn1 - y, -x, 0.0], [n * xn1, 0.0, 0.0], [1.0, 0.0, 0.0]]

    tau1 = min(tau_switch, tau_target)

    def hit_tau1(t, s):
        return s[2] - tau1
    hit_tau1.terminal = True
    hit_tau1.direction = 1

    # rough horizon: tau ~ alpha t^2 / 2 from a bare start, ~ alpha t / y0 with a large bulk
    t_bound = 10.0 * (math.sqrt(2 * tau1 / alpha) + tau1 * (1.0 + y0) / alpha)
    for _ in range(60):
        sol1 = solve_ivp(rhs_t, (0.0, t_bound), [x0, y0, 0.0], method="Radau", jac=jac_t,
                         rtol=rel_tol, atol=atol, dense_output=True, events=hit_tau1)
        if sol1.status == 1:
            break
        if sol1.status < 0:
            raise InstabilityError(sol1.message)
        t_bound *= 4.0
    else:
        raise HorizonError("tau never reached the switch value")
    t_sw = float(sol1.t_events[0][0])

    ts = _subdivide(np.append(sol1.t[sol1.t < t_sw], t_sw), 16, None, t_sw / 200)
    ts[-1] = t_sw
    s1 = sol1.sol(ts)
    s1[:, 0] = [x0, y0, 0.0]
    x1, y1, tau_1 = s1[0], s1[1], s1[2]
    tau_1[-1] = tau1
    if not np.all(np.isfinite(s1)):
        raise InstabilityError("non-finite state in physical-time phase")

    # drop nodes whose tau does not increase (possible only at roundoff level near t=0)
    keep = np.concatenate([[True], np.diff(tau_1) > 0])
    ts, x1, y1, tau_1 = ts[keep], x1[keep], y1[keep], tau_1[keep]

    t_nodes, tau_nodes, x_nodes, y_nodes = [ts], [tau_1], [x1], [y1]

    if tau_target > tau1:
        def rhs_tau(tau, s):
            budget.tick()
            x, y = s[1], s[2]
            if not math.isfinite(x):
                raise InstabilityError(f"monomer concentration non-finite at tau = {tau}")
            # trial stages may probe x <= 0; the error control rejects such steps
            if x <= 0:
                return [math.nan, math.nan, math.nan]
            return [1.0 / x, alpha / x - n * x ** (n - 1) - y, x ** (n - 1)]

        def jac_tau(tau, s):
            x = s[1]
            return [[0.0, -1.0 / x ** 2, 0.0],
                    [0.0, -alpha / x ** 2 - n * (n - 1) * x ** (n - 2), -1.0],
                    [0.0, (n - 1) * x ** (n - 2), 0.0]]

        start = [t_sw, float(x1[-1]), float(y1[-1])]
        sol2 = solve_ivp(rhs_tau, (tau1, tau_target), start, method="Radau", jac=jac_tau,
                         rtol=rel_tol, atol=atol, dense_output=True)
        if sol2.status != 0:
            raise HorizonError(sol2.message)
        taus = _subdivide(sol2.t, 8, node_rel_spacing, None)[1:]
        taus[-1] = tau_target
        s2 = sol2.sol(taus)
        if not np.all(np.isfinite(s2)):
            raise InstabilityError("non-finite state in tau phase")
        t_nodes.append(s2[0]); tau_nodes.append(taus); x_nodes.append(s2[1]); y_nodes.append(s2[2])

    t_all = np.concatenate(t_nodes)
    tau_all = np.concatenate(tau_nodes)
    x_all = np.concatenate(x_nodes)
    y_all = np.concatenate(y_nodes)
    if np.any(x_all[1:] <= 0):
        raise InstabilityError("monomer concentration not positive for t > 0")

    return MonomerTrajectory(t=t_all, tau=tau_all, x=x_all, y=y_all, params=params)


# ---------------------------------------------------------------------------
# long-time asymptotics


def c1_asymptotic(params: ModelParams, tau, tau_min: float = TAU_ASYMP_MIN):
    """Two-term long-time approximation of c1~(tau).

    (c1~)^(n-1) = (alpha/(n tau))^((n-1)/n) * (1 + (n-1)(1-1/n) log(tau)/tau)
    """
    tau_arr = np.asarray(tau, dtype=float)
    if np.any(tau_arr < tau_min):
        raise AsymptoticDomainError(f"asymptotic formula requires tau >= {tau_min}")
    n, alpha = params.n, params.alpha
    corr = 1.0 + (n - 1) * (1.0 - 1.0 / n) * np.log(tau_arr) / tau_arr
    val = (alpha / (n * tau_arr)) ** (1.0 / n) * corr ** (1.0 / (n - 1))
    return float(val) if np.ndim(tau) == 0 else val


def fn_correction(source, params: ModelParams, tau, tau_min: float = TAU_ASYMP_MIN):
    """f_n(tau) = -1 + (n tau/alpha)^((n-1)/n) * c1~(tau)^(n-1).

    ``source`` is a MonomerTrajectory or the string ``"asymptotic"``.
    """
    n, alpha = params.n, params.alpha
    tau_arr = np.asarray(tau, dtype=float)
    if isinstance(source, str):
        if source != "asymptotic":
            raise ValueError(f"unknown f_n source {source!r}")
        if np.any(tau_arr < tau_min):
            raise AsymptoticDomainError(f"asymptotic formula requires tau >= {tau_min}")
        # the two-term formula makes f_n an identity
        val = (n - 1) * (1.0 - 1.0 / n) * np.log(tau_arr) / tau_arr
    else:
        c1_pow = np.asarray(source.c1(tau_arr)) ** (n - 1)
        val = (n * tau_arr / alpha) ** ((n - 1) / n) * c1_pow - 1.0
    return float(val) if np.ndim(tau) == 0 else val


# ---------------------------------------------------------------------------
# validation solvers


@dataclass(frozen=True, eq=False)
class TruncatedSolution:
    """Output of :func:`solve_full_truncated` on its step grid plus dense access."""

    params: ModelParams
    J: int
    t: np.ndarray
    c1: np.ndarray
    c: np.ndarray          # shape (J - n + 1, len(t)), rows c_n .. c_J
    tau: np.ndarray
    flux: np.ndarray       # int_0^t (J+1) c1 c_J ds
    initial_mass: float
    _dense: object = field(repr=False, default=None)

    def state(self, t):
        return self._dense(t)

    def mass_residual(self) -> np.ndarray:
        """c1 + sum j c_j - (initial mass + alpha t - boundary flux) on the step grid."""
        n = self.params.n
        j = np.arange(n, self.J + 1, dtype=float)
        mass = self.c1 + j @ self.c
        return mass - (self.initial_mass + self.params.alpha * self.t - self.flux)

    def at_tau(self, tau_values: Sequence[float]) -> np.ndarray:
        """Rows [c1, c_n, ..., c_J] at the physical times where tau(t) equals each value."""
        out = []
        for tv in tau_values:
            if tv == 0.0:
                t_hit = 0.0
            else:
                idx = int(np.searchsorted(self.tau, tv))
                if idx >= self.tau.size:
                    raise TrajectoryRangeError(f"tau = {tv} beyond truncated solve (tau_end = {self.tau[-1]})")
                lo, hi = self.t[max(idx - 1, 0)], self.t[idx]
                t_hit = brentq(lambda s: self._dense(s)[-2] - tv, lo, hi, xtol=1e-15, rtol=1e-15)
            out.append(self._dense(t_hit)[:-2])
        return np.array(out)


def solve_full_truncated(params: ModelParams, data: InitialData, J: int, t_end: float,
                         rel_tol: float = DEFAULT_FULL_TOL, atol: float = 1e-300,
                         first_step: float | None = 1e-8) -> TruncatedSolution:
    """Integrate the full system truncated at cluster size J.

    State: [c1, c_n .. c_J, tau, boundary flux].  The clusters beyond J are
    dropped, so the mass identity acquires the outflow (J+1) c1 c_J.
    The tiny default ``atol`` keeps the error control relative even for
    Poisson-tail entries of size 1e-180; a small first step is then needed
    because most components start from exactly zero.
    """
    n, alpha = params.n, params.alpha
    if J < n:
        raise ValueError("truncation size J must be >= n")
    m = J - n + 1
    c_init = data.as_vector(J)
    y0 = np.concatenate([[data.c1_0], c_init, [0.0, 0.0]])

    def rhs(t, s):
        c1 = s[0]
        c = s[1:m + 1]
        out = np.empty_like(s)
        out[0] = alpha - n * c1 ** n - c1 * np.sum(c)
        out[1] = c1 ** n - c1 * c[0]
        out[2:m + 1] = c1 * (c[:-1] - c[1:])
        out[m + 1] = c1
        out[m + 2] = (J + 1) * c1 * c[-1]
        return out

    sol = solve_ivp(rhs, (0.0, t_end), y0, method="DOP853", rtol=rel_tol, atol=atol,
                    dense_output=True, first_step=first_step)
    if sol.status != 0:
        raise InstabilityError(sol.message)
    Y = sol.y
    if not np.all(np.isfinite(Y)):
        raise InstabilityError("non-finite concentration in truncated solve")
    conc = Y[:m + 1]
    floor = 10 * rel_tol * max(float(np.max(np.abs(conc))), 1e-300)
    if np.min(conc) < -floor:
        raise InstabilityError(f"negative concentration {np.min(conc):.3e} beyond tolerance")
    conc = np.where(conc < 0, 0.0, conc)

    j = np.arange(n, J + 1, dtype=float)
    initial_mass = data.c1_0 + float(j @ c_init)
    return TruncatedSolution(params=params, J=J, t=sol.t, c1=conc[0], c=conc[1:], tau=Y[m + 1],
                             flux=Y[m + 2], initial_mass=initial_mass, _dense=sol.sol)


def solve_triangular_tau(params: ModelParams, traj: MonomerTrajectory, J: int,
                         tau_grid: Sequence[float], data: InitialData | None = None,
                         rel_tol: float = 1e-12, atol: float = 1e-300) -> np.ndarray:
    """Solve c~_n' = c1~^(n-1) - c~_n, c~_j' = c~_{j-1} - c~_j on tau_grid.

    Returns an array of shape (len(tau_grid), J - n + 1), columns j = n..J.
    """
    n = params.n
    if J < n:
        raise ValueError("J must be >= n")
    tau_grid = np.asarray(tau_grid, dtype=float)
    if np.any(np.diff(tau_grid) <= 0) or tau_grid[0] < 0:
        raise ValueError("tau_grid must be increasing and nonnegative")
    if tau_grid[-1] > traj.tau_max:
        raise TrajectoryRangeError(f"tau_grid exceeds trajectory range {traj.tau_max}")
    m = J - n + 1
    c0 = np.zeros(m) if data is None else data.as_vector(J)

    def rhs(tau, c):
        out = np.empty_like(c)
        src = traj.c1_of_u(math.sqrt(max(tau, 0.0))) ** (n - 1)
        out[0] = src - c[0]
        out[1:] = c[:-1] - c[1:]
        return out

    t_end = float(tau_grid[-1])
    if t_end == 0.0:
        return np.tile(c0, (tau_grid.size, 1))
    # the forcing behaves like sqrt(tau) near 0, so take the first stretch on a fine leash
    sol = solve_ivp(rhs, (0.0, t_end), c0, method="DOP853", rtol=rel_tol, atol=atol,
                    t_eval=tau_grid, first_step=1e-8)
    if sol.status != 0:
        raise InstabilityError(sol.message)
    return sol.y.T.copy()
