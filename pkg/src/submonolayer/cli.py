"""Experiment runner: ``python3 -m submonolayer.cli <subcommand> --config cfg.json --out dir``.

Subcommands
    profile       table of Phi_{2,n} on xi in [-6, 4] for each configured n
    converge-xi   E(j) = |F(j, tau) - Phi_{2,n}(xi)| along tau = j Delta_j(xi), with rate fits
    diagnostics   rates of the pieces of the prefactor/remainder decomposition
    oracle        cross-check of three independent solution methods

Exit status: 0 when every verdict passes, 1 when a quantitative verdict
fails, 2 on a runtime or configuration error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import closedform, diagnostics, kinetics, profiles
from .model import (Explicit, InitialData, ModelParams, MonomerOnly, PowerLaw, make_explicit,
                    make_power_law, monomer_only, nu0)
from .quadrature import QuadratureSpec

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2

KINDS = {"profile": "profile-table", "converge-xi": "converge-xi",
         "diagnostics": "diagnostics", "oracle": "oracle-check"}


class ConfigError(ValueError):
    pass


def default_config(kind: str) -> dict:
    base = {
        "model": {"n": 2, "alpha": 1.0},
        "initial": {"kind": "monomer-only", "c1_0": 0.0},
        "experiment": {"kind": kind, "tolerances": {}, "workers": 1},
    }
    exp = base["experiment"]
    if kind == "profile-table":
        exp.update(n_values=[2, 3, 6, 12], xi_values={"lo": -6.0, "hi": 4.0, "step": 0.05})
    elif kind == "converge-xi":
        exp.update(xi_values=[-0.5, 0.0, 1.0], j_grid={"j_min": 128, "j_max": 16384, "factor": 2})
    elif kind == "diagnostics":
        exp.update(xi_values=[-1.0, 0.0, 1.0], tau_grid=[1e2, 1e3, 1e4, 1e5, 1e6],
                   decomposition_taus=[1e2, 1e3, 1e4, 1e5])
    elif kind == "oracle-check":
        exp.update(n_values=[2, 3], tau_grid=[0.5, 2.0, 5.0, 10.0, 20.0, 35.0, 50.0],
                   j_check=100, J=200)
    return base


DEFAULT_TOLERANCES = {
    "trajectory": 1e-10,
    "quadrature": 1e-10,
    "oracle": 1e-6,
    "mass_balance": 1e-7,
    "decomposition": 1e-6,
    "profile_identity": 1e-8,
    "final_constant": 0.25,
}


# ---------------------------------------------------------------------------
# configuration


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply ``a.b.c=value`` assignments; values are parsed as JSON when possible."""
    cfg = copy.deepcopy(cfg)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        parts = [p for p in key.strip().split(".") if p]
        if not parts:
            raise ConfigError(f"empty override key in {item!r}")
        node = cfg
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override path {key!r} crosses a non-table value")
        node[parts[-1]] = _parse_value(raw)
    return cfg


def _merge(base: dict, upd: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in upd.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(subcommand: str, loaded: dict | None, overrides=None) -> dict:
    kind = KINDS[subcommand]
    given = (loaded or {}).get("experiment", {}).get("kind")
    if given is not None and given != kind:
        raise ConfigError(f"config experiment.kind = {given!r} does not match subcommand {subcommand!r}")
    cfg = _merge(default_config(kind), loaded or {})
    cfg = apply_overrides(cfg, overrides)
    cfg["experiment"]["kind"] = kind
    cfg["experiment"]["tolerances"] = {**DEFAULT_TOLERANCES, **cfg["experiment"].get("tolerances", {})}
    _validate(cfg)
    return cfg


def _validate(cfg: dict) -> None:
    exp = cfg["experiment"]
    for xi in exp.get("xi_values", []) if isinstance(exp.get("xi_values"), list) else []:
        if not isinstance(xi, (int, float)) or not math.isfinite(xi):
            raise ConfigError(f"xi value {xi!r} is not a finite real")
    if exp["kind"] == "converge-xi":
        g = exp["j_grid"]
        js = j_grid(g)
        init = cfg["initial"]
        if init.get("kind") == "power-law" and js[-1] > int(init["K_cut"]):
            raise ConfigError(f"j_grid reaches {js[-1]} beyond K_cut = {init['K_cut']}")
    params_from(cfg)
    data_from(cfg, params_from(cfg))


def config_hash(cfg: dict) -> str:
    """Hash of the resolved config; the worker count does not change results and is left out."""
    cfg = copy.deepcopy(cfg)
    cfg.get("experiment", {}).pop("workers", None)
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def params_from(cfg: dict, n: int | None = None) -> ModelParams:
    m = cfg["model"]
    return ModelParams(int(n if n is not None else m["n"]), float(m.get("alpha", 1.0)))


def data_from(cfg: dict, params: ModelParams) -> InitialData:
    init = cfg["initial"]
    kind = init.get("kind", "monomer-only")
    c1_0 = float(init.get("c1_0", 0.0))
    if kind == "monomer-only":
        return monomer_only(params, c1_0)
    if kind == "power-law":
        return make_power_law(init["rho"], init["mu"], init["K_cut"], params, c1_0)
    if kind == "explicit":
        return make_explicit(init.get("entries", []), params, c1_0)
    raise ConfigError(f"unknown initial kind {kind!r}")


def j_grid(spec: dict) -> list[int]:
    j_min, j_max, factor = int(spec["j_min"]), int(spec["j_max"]), float(spec.get("factor", 2))
    if j_min < 2 or j_max < j_min or factor <= 1:
        raise ConfigError("j_grid needs 2 <= j_min <= j_max and factor > 1")
    out, j = [], float(j_min)
    while round(j) <= j_max:
        if not out or round(j) > out[-1]:
            out.append(int(round(j)))
        j *= factor
    return out


def xi_grid(spec) -> list[float]:
    if isinstance(spec, dict):
        return [float(v) for v in profiles.profile_grid(spec.get("step", 0.05), spec.get("lo", -6.0),
                                                         spec.get("hi", 4.0))]
    return [float(v) for v in spec]


def _quad(cfg: dict) -> QuadratureSpec:
    return QuadratureSpec(rel_tol=float(cfg["experiment"]["tolerances"]["quadrature"]), abs_tol=1e-300,
                          max_subdivisions=20000)


# ---------------------------------------------------------------------------
# output helpers


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o).__name__}")


PROFILE_PLOT = '''"""Plot the similarity profiles written by the profile subcommand."""
import csv, sys
import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "profile.csv"
curves = {}
with open(path) as fh:
    for row in csv.DictReader(fh):
        curves.setdefault(int(row["n"]), []).append((float(row["xi"]), float(row["phi2"])))
for n, pts in sorted(curves.items()):
    xs, ys = zip(*pts)
    plt.plot(xs, ys, label=f"n = {n}")
plt.xlabel("xi"); plt.ylabel("Phi_2,n(xi)"); plt.legend()
plt.savefig("profile.png", dpi=150)
'''

CONVERGE_PLOT = '''"""Log-log plot of E(j) per xi from the converge-xi table."""
import csv, sys
import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "converge_xi.csv"
series = {}
with open(path) as fh:
    for row in csv.DictReader(fh):
        series.setdefault(float(row["xi"]), []).append((int(row["j"]), float(row["abs_err"])))
for xi, pts in sorted(series.items()):
    js, es = zip(*pts)
    plt.loglog(js, es, "o-", label=f"xi = {xi:g}")
plt.xlabel("j"); plt.ylabel("E(j)"); plt.legend()
plt.savefig("converge_xi.png", dpi=150)
'''


# ---------------------------------------------------------------------------
# experiments


def run_profile_table(cfg: dict, out: Path) -> tuple[dict, int]:
    exp = cfg["experiment"]
    h = config_hash(cfg)
    xs = xi_grid(exp["xi_values"])
    ns = [int(n) for n in exp["n_values"]]
    rows = profiles.profile_table(ns, xs)
    _write_csv(out / "profile.csv", ["xi", "n", "phi2", "config_hash"], [r + (h,) for r in rows])
    # rows are ordered by n then xi, so column k of the wide table is rows[k*len(xs):(k+1)*len(xs)]
    m = len(xs)
    wide = [[xi] + [rows[k * m + i][2] for k in range(len(ns))] for i, xi in enumerate(xs)]
    _write_csv(out / "profile_wide.csv", ["xi"] + [f"phi2_n{n}" for n in ns], wide)
    (out / "plot_profile.py").write_text(PROFILE_PLOT)
    tol = exp["tolerances"]["profile_identity"]
    verdicts = {}
    for n in ns:
        vals = {xi: v for xi, nn, v in rows if nn == n}
        at0 = profiles.phi2(n, 0.0)
        checks = {"positive": all(v > 0 for v in vals.values()),
                  "identity_at_zero": abs(at0 - profiles.phi2_at_zero(n)) <= tol}
        if 4.0 in vals:
            checks["bound_at_4"] = vals[4.0] < profiles.phi2_at_zero(n) * math.exp(-8.0)
        verdicts[str(n)] = {"phi2_at_zero": at0, "closed_form": profiles.phi2_at_zero(n),
                            "rows": len(vals), "checks": checks,
                            "verdict": "pass" if all(checks.values()) else "fail"}
    report = {"config_hash": h, "profiles": verdicts}
    ok = all(v["verdict"] == "pass" for v in verdicts.values())
    return report, EXIT_OK if ok else EXIT_FAIL


def predicted_regime(data: InitialData, n: int) -> dict:
    """Predicted exponent of E(j) and whether the fit carries a log factor."""
    tail = data.tail
    if isinstance(tail, MonomerOnly):
        return {"regime": "monomer", "exponent": -0.5, "with_log": True, "window": 0.15}
    if isinstance(tail, Explicit) or (isinstance(tail, PowerLaw) and tail.mu > 1):
        return {"regime": "mu>1", "exponent": -1.0 / (2 * n), "with_log": False, "window": 0.1}
    mu = tail.mu
    if mu == 1:
        return {"regime": "mu=1", "exponent": -1.0 / (2 * n), "with_log": True, "window": 0.1}
    if mu > 1 - 1.0 / n:
        return {"regime": "1-1/n<mu<1", "exponent": -1.0 / (2 * n) + (1 - mu) / 2,
                "with_log": False, "window": 0.1}
    return {"regime": "mu<=1-1/n", "exponent": None, "with_log": False, "window": None}


def _converge_item(args):
    j, xi, params, data, traj, quad = args
    sp = closedform.scaling_point(j, xi, params.n)
    c = closedform.c_tilde(j, sp.tau, data, traj, quad)
    return sp.tau, c, profiles.scaled_observable(params, j, sp.tau, c)


def _pool_map(fn, items, workers: int):
    if workers <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def run_converge_xi(cfg: dict, out: Path) -> tuple[dict, int]:
    exp = cfg["experiment"]
    h = config_hash(cfg)
    params = params_from(cfg)
    data = data_from(cfg, params)
    n, alpha = params.n, params.alpha
    js = j_grid(exp["j_grid"])
    xis = xi_grid(exp["xi_values"])
    if len(js) < 3:
        raise ConfigError("j_grid needs at least 3 points for a rate fit")
    tau_need = max(closedform.scaling_point(js[-1], xi, n).tau for xi in xis)
    traj = kinetics.solve_monomer_bulk(params, data, 1.05 * tau_need,
                                       rel_tol=float(exp["tolerances"]["trajectory"]))
    quad = _quad(cfg)
    items = [(j, xi, params, data, traj, quad) for xi in xis for j in js]
    results = _pool_map(_converge_item, items, int(exp.get("workers", 1)))

    tail = data.tail
    mu = tail.mu if isinstance(tail, PowerLaw) else float("nan")
    rows, fits = [], {}
    pred = predicted_regime(data, n)
    k = 0
    for xi in xis:
        p2 = profiles.phi2(n, xi)
        pts = []
        for j in js:
            tau, c, F = results[k]
            k += 1
            err = abs(F - p2)
            rows.append((n, alpha, mu, xi, j, tau, c, F, p2, err, h))
            pts.append((float(j), err))
        entry = {"phi2": p2}
        try:
            fit = diagnostics.fit_rate(pts, with_log=pred["with_log"])
            entry["fit"] = fit.as_dict()
        except ValueError as exc:
            fit = None
            entry["fit"] = None
            entry["note"] = str(exc)
        if pred["exponent"] is None:
            entry["verdict"] = "n/a"
        elif fit is None:
            entry["verdict"] = "fail"
        else:
            entry["verdict"] = "pass" if abs(fit.exponent - pred["exponent"]) <= pred["window"] else "fail"
        fits[repr(xi)] = entry
    _write_csv(out / "converge_xi.csv",
               ["n", "alpha", "mu", "xi", "j", "tau", "c_tilde", "F", "phi2", "abs_err", "config_hash"], rows)
    (out / "plot_converge_xi.py").write_text(CONVERGE_PLOT)
    report = {"config_hash": h, "prediction": pred, "nu0": nu0(data), "tau_max": traj.tau_max, "fits": fits}
    ok = all(e["verdict"] != "fail" for e in fits.values())
    return report, EXIT_OK if ok else EXIT_FAIL


def run_diagnostics(cfg: dict, out: Path) -> tuple[dict, int]:
    exp = cfg["experiment"]
    tol = exp["tolerances"]
    h = config_hash(cfg)
    params = params_from(cfg)
    data = data_from(cfg, params)
    n = params.n
    taus = sorted(float(t) for t in exp["tau_grid"])
    xis = xi_grid(exp["xi_values"])
    dec_taus = [float(t) for t in exp.get("decomposition_taus", taus)]
    traj = kinetics.solve_monomer_bulk(params, data, max(taus + dec_taus),
                                       rel_tol=float(tol["trajectory"]))
    quad = _quad(cfg)
    lemmas = {repr(xi): diagnostics.check_lemma_rates(n, xi, taus, traj, quad, params, data) for xi in xis}
    decomp = []
    for xi in xis:
        for t in dec_taus:
            d = diagnostics.decomposition(xi, t, params, traj, quad)
            d["verdict"] = "pass" if d["rel_gap"] <= tol["decomposition"] else "fail"
            decomp.append(d)
    finals = {}
    if nu0(data) > 0:
        for xi in xis:
            s = diagnostics.final_constant_series(xi, taus, params, traj, data)
            s["verdict"] = "pass" if s["monotone_approach"] and s["rel_deviation"][-1] <= tol["final_constant"] else "fail"
            finals[repr(xi)] = s
    report = {"config_hash": h, "n": n, "rate_checks": lemmas, "decomposition": decomp, "final_constant": finals}
    verdicts = [c["verdict"] for r in lemmas.values() for c in r["checks"]]
    verdicts += [d["verdict"] for d in decomp] + [s["verdict"] for s in finals.values()]
    return report, EXIT_OK if all(v in ("pass", "below floor") for v in verdicts) else EXIT_FAIL


def _rel_max(a: np.ndarray, b: np.ndarray) -> float:
    mask = np.abs(b) > 0
    if not np.any(mask):
        return float(np.max(np.abs(a)))
    return float(np.max(np.abs(a[mask] - b[mask]) / np.abs(b[mask])))


def oracle_compare(params: ModelParams, data: InitialData, taus, j_check: int, J: int,
                   quad: QuadratureSpec | None = None, trajectory_tol: float = 1e-10) -> dict:
    """Max relative gaps between the truncated t-solve, the triangular tau-solve and c_tilde."""
    n = params.n
    taus = np.asarray(sorted(taus), dtype=float)
    traj = kinetics.solve_monomer_bulk(params, data, float(taus[-1]), rel_tol=trajectory_tol)
    # t at the largest tau, with a margin for the truncated solve
    t_end = float(np.interp(taus[-1], traj.tau, traj.t)) * 1.01 + 1e-9
    full = kinetics.solve_full_truncated(params, data, J, t_end, rel_tol=1e-10)
    A = full.at_tau(taus)[:, 1:j_check - n + 2]
    B = kinetics.solve_triangular_tau(params, traj, j_check, taus, data=data)
    C = np.array([[closedform.c_tilde(j, t, data, traj, quad) for j in range(n, j_check + 1)] for t in taus])
    res = full.mass_residual()
    scale = params.alpha * full.t + full.initial_mass
    mass = float(np.max(np.abs(res) / np.where(scale > 0, scale, 1.0)))
    zero = all(closedform.c_tilde(j, 0.0, data, traj, quad) == data.c0(j) for j in range(n, j_check + 1))
    return {"n": n, "truncated_vs_closed": _rel_max(A, C), "triangular_vs_closed": _rel_max(B, C),
            "truncated_vs_triangular": _rel_max(A, B), "mass_balance": mass, "tau_zero_roundtrip": zero,
            "min_value": float(C.min())}


def run_oracle_check(cfg: dict, out: Path) -> tuple[dict, int]:
    exp = cfg["experiment"]
    tol = exp["tolerances"]
    h = config_hash(cfg)
    runs = []
    for n in exp["n_values"]:
        params = params_from(cfg, int(n))
        data = data_from(cfg, params)
        r = oracle_compare(params, data, exp["tau_grid"], int(exp["j_check"]), int(exp["J"]),
                           _quad(cfg), float(tol["trajectory"]))
        gaps = [r["truncated_vs_closed"], r["triangular_vs_closed"], r["truncated_vs_triangular"]]
        r["verdict"] = "pass" if (max(gaps) <= tol["oracle"] and r["mass_balance"] <= tol["mass_balance"]
                                  and r["tau_zero_roundtrip"]) else "fail"
        runs.append(r)
    report = {"config_hash": h, "runs": runs}
    return report, EXIT_OK if all(r["verdict"] == "pass" for r in runs) else EXIT_FAIL


RUNNERS = {"profile": run_profile_table, "converge-xi": run_converge_xi,
           "diagnostics": run_diagnostics, "oracle": run_oracle_check}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="submonolayer", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON experiment config (defaults used if omitted)")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted-key override, e.g. model.n=3; repeatable")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        loaded = None
        if args.config is not None:
            with open(args.config) as fh:
                loaded = json.load(fh)
        cfg = resolve_config(args.command, loaded, args.override)
        args.out.mkdir(parents=True, exist_ok=True)
        report, code = RUNNERS[args.command](cfg, args.out)
        report["config"] = cfg
        report["exit_code"] = code
        _write_json(args.out / f"{args.command}_report.json", report)
    except Exception as exc:  # any failure to produce a verdict
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{args.command}: {'all verdicts pass' if code == EXIT_OK else 'a verdict failed'} "
          f"(report in {args.out / (args.command + '_report.json')})")
    return code


if __name__ == "__main__":
    sys.exit(main())
