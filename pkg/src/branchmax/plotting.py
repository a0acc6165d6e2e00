"""Figures for the ``report`` command.

matplotlib is optional; :func:`available` says whether figures can be
drawn.  Everything plotted here also exists as CSV next to the figures.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

golden_mean = (math.sqrt(5.0) - 1.0) / 2.0
fig_width = 5.0
params = {
    "axes.labelsize": 10,
    "font.size": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": [fig_width, fig_width * golden_mean],
    "figure.dpi": 150,
    "lines.linewidth": 1.2,
    "lines.markersize": 3,
    "savefig.bbox": "tight",
}


def available() -> bool:
    try:
        import matplotlib  # noqa: F401
    except ImportError:
        return False
    return True


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams.update(params)
    return plt


def tail_figure(path, mc=None, solver=None, prediction=None, window=None, title=None):
    """Log-log (or semi-log for exponential decay) survival curves with the theory line."""
    plt = _pyplot()
    fig, ax = plt.subplots()
    exponential = prediction is not None and prediction.get("decay") == "exponential"
    if mc is not None:
        keep = mc.value > 0
        ax.plot(mc.x[keep], mc.value[keep], ".", color="C0", label="Monte Carlo")
        if mc.upper is not None and np.any(mc.upper > mc.value):
            ax.fill_between(mc.x[keep], mc.value[keep], mc.upper[keep], color="C0", alpha=0.2,
                            label="censoring bracket")
    if solver is not None:
        keep = solver.value > 0
        ax.plot(solver.x[keep], solver.value[keep], "-", color="C1", label="fixed point")
    xs = _support(mc, solver)
    if prediction is not None and xs is not None and prediction.get("constant") not in (None, "implicit"):
        xx = np.geomspace(max(xs[0], 1e-2), xs[1], 200)
        if exponential:
            yy = prediction["constant"] * np.exp(-prediction["exponent"] * xx)
        else:
            yy = prediction["constant"] * xx ** (-prediction["exponent"])
        ax.plot(xx, yy, "--", color="k", label="theory")
    if window is not None:
        for w in window:
            ax.axvline(w, color="0.6", lw=0.8, ls=":")
    ax.set_yscale("log")
    if not exponential:
        ax.set_xscale("log")
    ax.set_xlabel("x")
    ax.set_ylabel("P(M >= x)")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def extinction_figure(path, ext, beta, window=None):
    plt = _pyplot()
    fig, ax = plt.subplots()
    keep = (ext.value > 0) & (ext.x > 0)
    ax.loglog(ext.x[keep], ext.value[keep], ".", color="C0", label="Monte Carlo")
    t = ext.x[keep]
    if t.size:
        ref = ext.value[keep][np.searchsorted(t, t[-1] ** 0.5 * t[0] ** 0.5)] if t.size > 2 else 1.0
        mid = t[np.searchsorted(t, t[-1] ** 0.5 * t[0] ** 0.5)] if t.size > 2 else 1.0
        ax.loglog(t, ref * (t / mid) ** (-1.0 / (beta - 1.0)), "--", color="k",
                  label=f"slope -1/(beta-1) = {-1.0 / (beta - 1.0):.3g}")
    if window is not None:
        for w in window:
            ax.axvline(w, color="0.6", lw=0.8, ls=":")
    ax.set_xlabel("t")
    ax.set_ylabel("P(extinction time > t)")
    ax.legend()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def remainder_figure(path, x, u, R, p_sup):
    plt = _pyplot()
    fig, ax = plt.subplots()
    pos = x > 0
    for y, lab, st in ((u, "u(x)", "-"), (p_sup, "P(S_e >= x)", "--"), (R, "R(x)", ":")):
        keep = pos & (y > 0)
        ax.semilogy(x[keep], y[keep], st, label=lab)
    ax.set_xlabel("x")
    ax.legend()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def _support(mc, solver):
    lo, hi = [], []
    for c in (mc, solver):
        if c is not None:
            keep = (c.value > 0) & (c.x > 0)
            if keep.any():
                lo.append(c.x[keep][0])
                hi.append(c.x[keep][-1])
    return (min(lo), max(hi)) if lo else None
