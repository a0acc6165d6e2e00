"""Pipeline steps behind the command-line interface.

Each step reads a validated :class:`ExperimentConfig`, writes its artifacts
into the output directory and returns a summary dict.  Artifacts carry the
config hash; downstream steps refuse inputs produced by another config.
"""

from __future__ import annotations

import logging
import math
import time
from pathlib import Path

import numpy as np

from . import io
from .asymptotics import (TailCurve, auto_window, compare, fit_exponential_tail, fit_power_tail,
                          loglog_slope, predict)
from .branching import SimLimits, default_threads, estimate_tail, extinction_tail, simulate_batch
from .config import ExperimentConfig
from .errors import FitError
from .fixedpoint import Grid, make_kernel, remainder, solve, truncation_sensitivity, integral_of_u
from .levy import BrownianWithDrift

log = logging.getLogger(__name__)

OUTCOMES = "outcomes.csv"
TAIL = "tail.csv"
EXTINCTION = "extinction.csv"
SIM_META = "simulate.json"
SOLUTION = "solution.csv"
SOLVE_META = "solution.json"
PREDICTION = "prediction.json"
FIT = "fit.json"
VERIFY = "verify.json"


def _out(cfg: ExperimentConfig, name: str) -> Path:
    return cfg.output / name


def simulate(cfg: ExperimentConfig, threads: int | None = None) -> dict:
    threads = default_threads() if threads is None else threads
    h = cfg.hash()
    t0 = time.perf_counter()
    batch = simulate_batch(cfg.model, cfg.law, cfg.runs, cfg.seed,
                           SimLimits(int(cfg.data["limits"]["particle_cap"])), threads=threads)
    wall = time.perf_counter() - t0
    tail = estimate_tail(batch, cfg.x_grid)
    ext = extinction_tail(batch, cfg.t_grid)
    io.write_outcomes(_out(cfg, OUTCOMES), batch, h)
    io.write_curve(_out(cfg, TAIL), tail, h, "x")
    io.write_curve(_out(cfg, EXTINCTION), ext, h, "t")
    meta = {"seed": cfg.seed, "runs": cfg.runs, "threads": threads,
            "censored_fraction": batch.censored_fraction,
            "mean_particles": float(batch.particles.mean()),
            "max_particles": int(batch.particles.max()),
            "wall_time_s": wall, "config": cfg.data}
    io.write_json(_out(cfg, SIM_META), meta, h)
    log.info("simulated %d runs in %.1fs, censored fraction %.2e", cfg.runs, wall, batch.censored_fraction)
    return {"batch": batch, "tail": tail, "extinction": ext, "meta": meta}


def solve_step(cfg: ExperimentConfig, rng_seed: int | None = None) -> dict:
    h = cfg.hash()
    g = cfg.data["grid"]
    grid = Grid(float(g["x_max"]), float(g["h"]))
    kspec = cfg.data["kernel"]
    rng = np.random.default_rng(cfg.seed if rng_seed is None else rng_seed)
    kernel = make_kernel(cfg.model, int(kspec.get("m", 100_000)), rng,
                         analytic=kspec.get("type", "analytic") == "analytic")
    law = cfg.law
    t0 = time.perf_counter()
    sol = solve(kernel, grid, law, tol=float(g["tol"]), max_iter=int(g.get("max_iter", 10_000)))
    wall = time.perf_counter() - t0
    x = sol.x
    R = remainder(sol, kernel, x, law)
    p_sup = kernel.survival_sup(x)
    io.write_solution(_out(cfg, SOLUTION), x, sol.u, R, p_sup, h)
    meta = {"grid": {"x_max": grid.x_max, "h": grid.h}, "tol": sol.tol, "iterations": sol.iterations,
            "residual": sol.residual, "kernel": sol.kernel, "wall_time_s": wall,
            "integral_u": integral_of_u(sol)}
    if g.get("truncation_check"):
        meta["truncation_sensitivity"] = truncation_sensitivity(
            kernel, grid, law, sol, max_iter=int(g.get("max_iter", 10_000)))
    meta["remainder_check"] = remainder_check(x, sol.u, R, p_sup)
    io.write_json(_out(cfg, SOLVE_META), meta, h)
    return {"solution": sol, "kernel": kernel, "R": R, "p_sup": p_sup, "meta": meta}


def remainder_check(x, u, R, p_sup, tol: float = 1e-6) -> dict:
    """Worst violations of 0 <= R <= min(u, P(S_e >= x)) over grid points x > 0."""
    pos = x > 0
    lo = float(np.min(R[pos]))
    over_u = float(np.max(R[pos] - u[pos]))
    over_p = float(np.max(R[pos] - p_sup[pos]))
    ok = lo >= -tol and over_u <= tol and over_p <= tol
    return {"min_R": lo, "max_R_minus_u": over_u, "max_R_minus_Psup": over_p, "tolerance": tol, "pass": ok}


def predict_step(cfg: ExperimentConfig) -> dict:
    pred = predict(cfg.model, cfg.law)
    io.write_json(_out(cfg, PREDICTION), pred.to_dict(), cfg.hash())
    return {"prediction": pred}


def _load_tail(cfg) -> TailCurve:
    meta = io.read_json(_out(cfg, SIM_META))
    io.require_hash(meta.get("config_hash"), cfg.hash(), _out(cfg, SIM_META))
    curve, found = io.read_curve(_out(cfg, TAIL), n=int(meta["runs"]))
    io.require_hash(found, cfg.hash(), _out(cfg, TAIL))
    return curve


def _load_extinction(cfg) -> TailCurve:
    curve, found = io.read_curve(_out(cfg, EXTINCTION))
    io.require_hash(found, cfg.hash(), _out(cfg, EXTINCTION))
    return curve


def _load_solution(cfg) -> tuple[TailCurve, dict, dict]:
    cols, found = io.read_solution(_out(cfg, SOLUTION))
    io.require_hash(found, cfg.hash(), _out(cfg, SOLUTION))
    meta = io.read_json(_out(cfg, SOLVE_META))
    io.require_hash(meta.get("config_hash"), cfg.hash(), _out(cfg, SOLVE_META))
    return TailCurve.exact(cols["x"], cols["u"]), cols, meta


def _solver_window(pred, curve: TailCurve, cfg) -> tuple[float, float]:
    w = cfg.data["fit"].get("solver_window")
    if w:
        return float(w[0]), float(w[1])
    v = curve.value
    if pred.decay == "exponential":
        lo = curve.x[np.nonzero(v <= 1e-2)[0][0]]
        hi = curve.x[np.nonzero(v >= 1e-6)[0][-1]]
        return float(lo), float(hi)
    lo = curve.x[np.nonzero(v <= 0.05)[0][0]]
    return float(lo), float(curve.x[-1] / 2.0)


def _fit_route(pred, curve: TailCurve, window) -> dict:
    lo, hi = window
    if pred.decay == "power":
        free = fit_power_tail(curve, lo, hi)
        pinned = fit_power_tail(curve, lo, hi, exponent=pred.exponent)
        return {"fit": free, "constant_fit": pinned}
    return {"fit": fit_exponential_tail(curve, lo, hi), "constant_fit": None}


def fit_step(cfg: ExperimentConfig, routes=None, pred=None) -> dict:
    """Fit every available route; returns and writes the fitted parameters."""
    pred = pred or predict(cfg.model, cfg.law)
    routes = routes or cfg.data["fit"].get("routes", ["mc", "solver"])
    out = {"prediction": pred.to_dict(), "routes": {}}
    fits = {}
    if "mc" in routes:
        curve = _load_tail(cfg)
        w = cfg.data["fit"].get("mc_window") or auto_window(curve)
        fits["mc"] = _fit_route(pred, curve, w)
        fits["mc"]["curve"] = curve
        ext = _load_extinction(cfg)
        ew = cfg.data["fit"]["extinction_window"]
        slope, se = loglog_slope(ext, ew[0], ew[1])
        fits["extinction"] = {"slope": slope, "stderr": se, "window": ew,
                              "predicted": -1.0 / (cfg.law.beta - 1.0)}
    if "solver" in routes:
        curve, cols, meta = _load_solution(cfg)
        w = _solver_window(pred, curve, cfg)
        fits["solver"] = _fit_route(pred, curve, w)
        fits["solver"]["curve"] = curve
        fits["solver"]["cols"] = cols
        fits["solver"]["meta"] = meta
    for name in ("mc", "solver"):
        if name in fits:
            f = fits[name]
            out["routes"][name] = {"fit": f["fit"].to_dict(),
                                   "constant_fit": f["constant_fit"].to_dict() if f["constant_fit"] else None}
    if "extinction" in fits:
        out["extinction"] = fits["extinction"]
    io.write_json(_out(cfg, FIT), out, cfg.hash())
    return fits


def cross_check(mc: TailCurve, solver: TailCurve, h: float, x_upto: float = 50.0) -> dict:
    """Pointwise agreement of Monte Carlo and solver curves.

    At each Monte Carlo grid point ``x <= x_upto`` the estimate must fall in
    ``[u(x + 2h) - 3 se, u(x - 2h) + 3 se]``: three standard errors vertically
    and a shift of up to two grid steps horizontally.  ``se`` is the binomial
    standard error at ``u(x)`` for the Monte Carlo sample size.
    """
    x = mc.x[(mc.x <= x_upto) & (mc.x <= solver.x[-1] - 2 * h)]
    u_hi = np.interp(np.maximum(x - 2 * h, 0.0), solver.x, solver.value)
    u_lo = np.interp(x + 2 * h, solver.x, solver.value)
    idx = np.searchsorted(mc.x, x)
    v = mc.value[idx]
    u = np.interp(x, solver.x, solver.value)
    # binomial stderr under the solver value; the plug-in one is 0 wherever no run reached x
    se = np.sqrt(u * (1.0 - u) / mc.n) if mc.n else mc.stderr[idx]
    lo_bound = u_lo - 3 * se
    hi_bound = u_hi + 3 * se
    bad = (v < lo_bound) | (v > hi_bound)
    z = (v - u) / np.where(se > 0, se, np.inf)
    return {"points": int(x.size), "failures": int(bad.sum()),
            "failed_x": x[bad].tolist(), "max_abs_z": float(np.max(np.abs(z))) if x.size else 0.0,
            "pass": bool(not bad.any())}


def verify(cfg: ExperimentConfig, inline: bool = False, threads: int | None = None,
           pred=None) -> dict:
    """Compare every route with the prediction; returns the report (``report['pass']``).

    ``pred`` replaces the prediction derived from the config, e.g. to check
    that a wrong offspring index is rejected.
    """
    routes = cfg.data["fit"].get("routes", ["mc", "solver"])
    if inline:
        if "mc" in routes and not _out(cfg, SIM_META).exists():
            simulate(cfg, threads)
        if "solver" in routes and not _out(cfg, SOLVE_META).exists():
            solve_step(cfg)
    pred = pred or predict(cfg.model, cfg.law)
    fits = fit_step(cfg, routes, pred)
    tol = dict(cfg.data["fit"]["tolerances"])
    report = {"regime": pred.regime, "prediction": pred.to_dict(), "routes": {}}
    ok = True
    for name in ("mc", "solver"):
        if name not in fits:
            continue
        f = fits[name]
        t = dict(tol)
        if name == "mc" and cfg.data["fit"].get("mc_tolerances"):
            t.update(cfg.data["fit"]["mc_tolerances"])
        if f["constant_fit"] is not None:
            t["constant_fit"] = f["constant_fit"]
        rep = compare(pred, f["fit"], t)
        report["routes"][name] = rep
        ok &= rep["pass"]
    if "extinction" in fits:
        e = fits["extinction"]
        e_tol = float(cfg.data["fit"]["extinction_tolerance"])
        e["pass"] = abs(e["slope"] - e["predicted"]) <= e_tol
        e["tolerance"] = e_tol
        report["extinction"] = e
        ok &= e["pass"]
    if "mc" in fits and "solver" in fits:
        xc = float(cfg.data["fit"].get("cross_upto", 50.0))
        cc = cross_check(fits["mc"]["curve"], fits["solver"]["curve"], float(cfg.data["grid"]["h"]), xc)
        report["cross_check"] = cc
        ok &= cc["pass"]
    if "solver" in fits:
        rc = fits["solver"]["meta"].get("remainder_check")
        report["remainder_check"] = rc
        ok &= bool(rc and rc["pass"])
        report["solver"] = {k: fits["solver"]["meta"][k] for k in ("iterations", "residual", "tol")}
        ok &= fits["solver"]["meta"]["residual"] <= fits["solver"]["meta"]["tol"]
    if "mc" in fits:
        meta = io.read_json(_out(cfg, SIM_META))
        report["censored_fraction"] = meta["censored_fraction"]
    report["pass"] = bool(ok)
    io.write_json(_out(cfg, VERIFY), report, cfg.hash())
    return report
