"""Monotone fixed-point solver for the survival function of the maximum.

``u(x) = P(M >= x)`` solves ``u = T(u)`` with

    T(u)(x) = P(S_e >= x) + E[1{S_e < x} (u - F(u))(x - L_e)],

``u = 0`` on the negative half-line.  Iterating ``T`` from ``u = 0`` gives a
pointwise nondecreasing sequence (the maximum reached within ``n``
generations) that converges to ``u``.  ``u`` lives on the grid
``0, h, ..., x_max``, is linearly interpolated between nodes and is clamped
to 0 past ``x_max``.

Kernels:

* ``EmpiricalKernel``: a frozen sample of killed pairs; the expectation is a
  sample average.
* ``ExponentialKernel``: Brownian motion with drift, where ``S_e`` and
  ``S_e - L_e`` are independent exponentials.  The default ``recursive``
  evaluation runs two first-order exponential filters over the grid, exact
  for piecewise-linear ``u - F(u)`` in the inner integral and second-order
  accurate in the outer one.  ``quadrature`` evaluates the same expectation
  with tensor Gauss-Legendre rules and is meant as an independent check on
  small grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .errors import ConvergenceError, ParameterError
from .levy import BrownianWithDrift, LevyModel, sample_killed_pairs
from .offspring import OffspringLaw


@dataclass(frozen=True)
class Grid:
    x_max: float = 200.0
    h: float = 0.05

    def __post_init__(self):
        if not (self.h > 0 and self.x_max > 0):
            raise ParameterError("grid needs h > 0 and x_max > 0")
        n = self.x_max / self.h
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ParameterError(f"x_max={self.x_max} is not a multiple of h={self.h}")

    @property
    def size(self) -> int:
        return int(round(self.x_max / self.h)) + 1

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.size) * self.h


@dataclass(frozen=True)
class ExponentialKernel:
    r_plus: float
    r_minus: float
    method: str = "recursive"
    nodes: int = 256

    def __post_init__(self):
        if self.method not in ("recursive", "quadrature"):
            raise ParameterError(f"unknown kernel method {self.method!r}")

    def survival_sup(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(x > 0, np.exp(-self.r_plus * np.maximum(x, 0.0)), 1.0)

    def descriptor(self) -> dict:
        return {"type": "product-exponential", "r_plus": self.r_plus, "r_minus": self.r_minus,
                "method": self.method, "nodes": self.nodes}


@dataclass(frozen=True, eq=False)
class EmpiricalKernel:
    """Frozen sample of killed pairs, stored sorted by ``s``."""

    l: np.ndarray = field(repr=False)
    s: np.ndarray = field(repr=False)

    def __post_init__(self):
        l = np.asarray(self.l, dtype=np.float64)
        s = np.asarray(self.s, dtype=np.float64)
        if l.shape != s.shape or l.ndim != 1 or l.size == 0:
            raise ParameterError("kernel needs two equal-length nonempty 1-d arrays")
        if np.any(s < 0) or np.any(s < l):
            raise ParameterError("every pair must satisfy s >= 0 and s >= l")
        order = np.argsort(s, kind="stable")
        object.__setattr__(self, "l", np.ascontiguousarray(l[order]))
        object.__setattr__(self, "s", np.ascontiguousarray(s[order]))

    @property
    def size(self) -> int:
        return self.s.size

    def survival_sup(self, x):
        x = np.asarray(x, dtype=np.float64)
        return 1.0 - np.searchsorted(self.s, x, side="left") / self.s.size

    def descriptor(self) -> dict:
        return {"type": "empirical", "size": int(self.size)}


Kernel = ExponentialKernel | EmpiricalKernel


def make_kernel(model: LevyModel, m: int = 100_000, rng: np.random.Generator | None = None,
                analytic: bool = True, method: str = "recursive") -> Kernel:
    """Analytic kernel for Brownian motion (unless ``analytic=False``), else ``m`` sampled pairs."""
    if analytic and isinstance(model, BrownianWithDrift):
        rp, rm = model.wh_rates
        return ExponentialKernel(rp, rm, method=method)
    if rng is None:
        rng = np.random.default_rng()
    l, s = sample_killed_pairs(model, rng, m)
    return EmpiricalKernel(l, s)


@dataclass
class SolverSolution:
    x_max: float
    h: float
    u: np.ndarray
    residual: float
    iterations: int
    tol: float
    kernel: dict
    updates: np.ndarray = field(repr=False)

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.u.size) * self.h

    @property
    def grid(self) -> Grid:
        return Grid(self.x_max, self.h)

    def __call__(self, x):
        """Linear interpolation, 0 for x < 0 and past x_max."""
        return _interp_array(self.u, self.h, np.asarray(x, dtype=np.float64))


# --- shared numba helpers ------------------------------------------------------


@nb.njit(cache=True)
def _F(z, canonical, c, beta, table):
    if canonical:
        return c * z ** beta
    # z - 1 + sum_n p_n (1 - z)^n by Horner
    q = 1.0 - z
    acc = 0.0
    for k in range(table.size - 1, -1, -1):
        acc = acc * q + table[k]
    return z - 1.0 + acc


@nb.njit(cache=True)
def _interp(u, h, y):
    if y < 0.0:
        return 0.0
    t = y / h
    j = int(t)
    n = u.size
    if j >= n - 1:
        if j == n - 1 and t - j == 0.0:
            return u[n - 1]
        return 0.0
    w = t - j
    return (1.0 - w) * u[j] + w * u[j + 1]


@nb.njit(cache=True)
def _interp_array(u, h, ys):
    out = np.empty(ys.size)
    flat = ys.ravel()
    for i in range(flat.size):
        out[i] = _interp(u, h, flat[i])
    return out.reshape(ys.shape)


@nb.njit(cache=True)
def _g(z, canonical, c, beta, table):
    return z - _F(z, canonical, c, beta, table)


# --- exponential kernel, recursive --------------------------------------------


@nb.njit(cache=True)
def _inner_exp(g, h, rm, G):
    """G(y_j) = E[g(y_j + D)], D ~ Exp(rm), g piecewise linear and 0 past the grid."""
    n = g.size
    em = math.exp(-rm * h)
    a0 = -math.expm1(-rm * h)
    a1 = (a0 / rm - h * em) / h
    G[n - 1] = 0.0
    for j in range(n - 2, -1, -1):
        G[j] = em * G[j + 1] + (a0 - a1) * g[j] + a1 * g[j + 1]


@nb.njit(cache=True)
def _apply_exp(u, h, rp, rm, canonical, c, beta, table, out, g, G):
    n = u.size
    for j in range(n):
        g[j] = _g(u[j], canonical, c, beta, table)
    _inner_exp(g, h, rm, G)
    ep = math.exp(-rp * h)
    b0 = -math.expm1(-rp * h)
    b1 = (b0 / rp - h * ep) / h
    acc = 0.0
    out[0] = 1.0
    for j in range(1, n):
        acc = ep * acc + (b0 - b1) * G[j] + b1 * G[j - 1]
        out[j] = math.exp(-rp * j * h) + acc


# --- exponential kernel, Gauss-Legendre quadrature ----------------------------


@nb.njit(cache=True)
def _apply_exp_quad(u, h, rp, rm, canonical, c, beta, table, xs, gl_x, gl_w):
    """T(u) at points ``xs``; S is integrated over (0, x) in probability space."""
    out = np.empty(xs.size)
    k = gl_x.size
    # D nodes: probability-space nodes on (0, 1) mapped through the Exp(rm) quantile
    dq = np.empty(k)
    for b in range(k):
        dq[b] = -math.log1p(-0.5 * (gl_x[b] + 1.0)) / rm
    for i in range(xs.size):
        x = xs[i]
        if x <= 0.0:
            out[i] = 1.0
            continue
        p_below = -math.expm1(-rp * x)
        acc = 0.0
        for a in range(k):
            pa = 0.5 * (gl_x[a] + 1.0) * p_below
            s = -math.log1p(-pa) / rp
            inner = 0.0
            for b in range(k):
                z = _interp(u, h, x - s + dq[b])
                inner += gl_w[b] * _g(z, canonical, c, beta, table)
            acc += gl_w[a] * 0.5 * inner
        out[i] = math.exp(-rp * x) + 0.5 * p_below * acc
    return out


@nb.njit(cache=True)
def _remainder_exp_quad(u, h, rp, rm, canonical, c, beta, table, xs, gl_x, gl_w):
    """R(x) for x > 0: P(S >= x) - E[1{S >= x, L < x} g(x - L)]."""
    out = np.empty(xs.size)
    k = gl_x.size
    for i in range(xs.size):
        x = xs[i]
        p_above = math.exp(-rp * x)
        acc = 0.0
        for a in range(k):
            s = x - math.log1p(-0.5 * (gl_x[a] + 1.0)) / rp  # S | S >= x
            lo = s - x  # need D > s - x for L < x
            p_d = math.exp(-rm * lo)
            inner = 0.0
            for b in range(k):
                d = lo - math.log1p(-0.5 * (gl_x[b] + 1.0)) / rm
                z = _interp(u, h, x - s + d)
                inner += gl_w[b] * _g(z, canonical, c, beta, table)
            acc += gl_w[a] * 0.5 * p_d * 0.5 * inner
        out[i] = p_above - p_above * acc
    return out


# --- empirical kernel ------------------------------------------------------------


@nb.njit(cache=True)
def _apply_emp(u, h, ls, ss, canonical, c, beta, table, out):
    n = u.size
    m = ss.size
    p = 0
    for j in range(n):
        x = j * h
        while p < m and ss[p] < x:
            p += 1
        acc = float(m - p)
        for q in range(p):
            z = _interp(u, h, x - ls[q])
            acc += _g(z, canonical, c, beta, table)
        out[j] = acc / m


@nb.njit(cache=True)
def _remainder_emp(u, h, ls, ss, canonical, c, beta, table, xs):
    """R(x) for x >= 0: mean over pairs of 1{s >= x} (1 - 1{l < x} g(x - l))."""
    out = np.empty(xs.size)
    m = ss.size
    for i in range(xs.size):
        x = xs[i]
        acc = 0.0
        for q in range(m):
            if ss[q] >= x:
                acc += 1.0
                if ls[q] < x:
                    acc -= _g(_interp(u, h, x - ls[q]), canonical, c, beta, table)
        out[i] = acc / m
    return out


# --- iteration driver ---------------------------------------------------------


@nb.njit(cache=True)
def _iterate(kind, u, h, p0, p1, ls, ss, canonical, c, beta, table, tol, max_iter, check):
    """Run the monotone iteration in place.  Returns (iterations, residual, updates, violation).

    ``violation``: 0 ok, 1 decreased in n, 2 increased in x, 3 left [0, 1].
    """
    n = u.size
    out = np.empty(n)
    g = np.empty(n)
    G = np.empty(n)
    updates = np.empty(max_iter)
    it = 0
    resid = np.inf
    violation = 0
    slack = 1e-13
    while it < max_iter:
        if kind == 0:
            _apply_exp(u, h, p0, p1, canonical, c, beta, table, out, g, G)
        else:
            _apply_emp(u, h, ls, ss, canonical, c, beta, table, out)
        resid = 0.0
        for j in range(n):
            d = out[j] - u[j]
            if check and violation == 0:
                if d < -slack:
                    violation = 1
                elif out[j] < -slack or out[j] > 1.0 + slack:
                    violation = 3
                elif j > 0 and out[j] > out[j - 1] + slack:
                    violation = 2
            if abs(d) > resid:
                resid = abs(d)
            u[j] = out[j]
        updates[it] = resid
        it += 1
        if resid < tol:
            break
    return it, resid, updates[:it], violation


def _law_args(law: OffspringLaw):
    table = law.pmf_table if law.pmf_table is not None else np.zeros(1)
    return law.canonical, float(law.c), float(law.beta), np.ascontiguousarray(table, dtype=np.float64)


def _check_u(u, grid: Grid):
    u = np.ascontiguousarray(u, dtype=np.float64)
    if u.shape != (grid.size,):
        raise ParameterError(f"grid function has {u.size} values, grid has {grid.size} nodes")
    if np.any(u < 0) or np.any(u > 1):
        raise ParameterError("grid function values must lie in [0, 1]")
    return u


def _gauss_legendre(n):
    return np.polynomial.legendre.leggauss(int(n))


def apply_T(u, kernel: Kernel, grid: Grid, law: OffspringLaw) -> np.ndarray:
    """One application of the operator on the grid."""
    u = _check_u(u, grid)
    args = _law_args(law)
    out = np.empty_like(u)
    if isinstance(kernel, ExponentialKernel):
        if kernel.method == "quadrature":
            gx, gw = _gauss_legendre(kernel.nodes)
            return _apply_exp_quad(u, grid.h, kernel.r_plus, kernel.r_minus, *args, grid.x, gx, gw)
        _apply_exp(u, grid.h, kernel.r_plus, kernel.r_minus, *args, out,
                   np.empty_like(u), np.empty_like(u))
    elif isinstance(kernel, EmpiricalKernel):
        _apply_emp(u, grid.h, kernel.l, kernel.s, *args, out)
    else:
        raise ParameterError(f"unknown kernel {kernel!r}")
    return out


def solve(kernel: Kernel, grid: Grid, law: OffspringLaw, tol: float = 1e-8,
          max_iter: int = 10_000, check: bool = True, u0=None) -> SolverSolution:
    """Iterate ``u_{n+1} = T(u_n)`` from ``u_0 = 0`` until the sup-norm update is below ``tol``.

    With ``check`` the iterates are verified to stay in [0, 1], be
    nonincreasing in x and nondecreasing in n; a violation raises
    ``RuntimeError``.  ``u0`` warm-starts the iteration (it must lie below
    the fixed point for the monotone picture to hold).
    """
    if not tol > 0:
        raise ParameterError("tol must be positive")
    u = np.zeros(grid.size) if u0 is None else _check_u(u0, grid).copy()
    args = _law_args(law)
    if isinstance(kernel, ExponentialKernel):
        if kernel.method != "recursive":
            raise ParameterError("solve uses the recursive exponential kernel; "
                                 "quadrature is for single applications")
        kind, p0, p1, ls, ss = 0, kernel.r_plus, kernel.r_minus, np.zeros(1), np.zeros(1)
    elif isinstance(kernel, EmpiricalKernel):
        kind, p0, p1, ls, ss = 1, 0.0, 0.0, kernel.l, kernel.s
    else:
        raise ParameterError(f"unknown kernel {kernel!r}")
    it, resid, updates, violation = _iterate(kind, u, grid.h, p0, p1, ls, ss, *args,
                                             float(tol), int(max_iter), bool(check))
    if violation:
        what = {1: "iterate decreased", 2: "iterate increased in x", 3: "iterate left [0, 1]"}
        raise RuntimeError(f"monotone iteration broken: {what[violation]}")
    if resid >= tol:
        raise ConvergenceError(f"no convergence after {it} iterations: residual {resid:.3e} > tol {tol:.1e}",
                               residual=resid, iterations=it)
    return SolverSolution(grid.x_max, grid.h, u, float(resid), int(it), float(tol),
                          kernel.descriptor(), np.asarray(updates).copy())


def remainder(solution: SolverSolution, kernel: Kernel, x, law: OffspringLaw):
    """``R(x) = P(S_e >= x) + E[(1{S_e < x} - 1{L_e < x}) (u - F(u))(x - L_e)] - 1{x < 0}``."""
    xs = np.atleast_1d(np.asarray(x, dtype=np.float64))
    args = _law_args(law)
    u = solution.u
    h = solution.h
    if isinstance(kernel, ExponentialKernel):
        if kernel.method == "quadrature":
            gx, gw = _gauss_legendre(kernel.nodes)
            pos = np.maximum(xs, 0.0)
            out = _remainder_exp_quad(u, h, kernel.r_plus, kernel.r_minus, *args, pos, gx, gw)
        else:
            # for x >= 0 the expectation factorizes: R = e^{-r+ x} (1 - r+ E[g(D)] / (r+ + r-))
            g = np.array([_g(z, *args) for z in u])
            G = np.empty_like(g)
            _inner_exp(g, h, kernel.r_minus, G)
            rp, rm = kernel.r_plus, kernel.r_minus
            out = np.exp(-rp * np.maximum(xs, 0.0)) * (1.0 - rp * G[0] / (rp + rm))
        neg = xs < 0
        if np.any(neg):
            out[neg] = _remainder_negative(u, h, kernel, xs[neg], args)
    elif isinstance(kernel, EmpiricalKernel):
        out = _remainder_emp(u, h, kernel.l, kernel.s, *args, xs)
        neg = xs < 0
        if np.any(neg):
            out[neg] = _remainder_negative_emp(u, h, kernel, xs[neg], args)
    else:
        raise ParameterError(f"unknown kernel {kernel!r}")
    return float(out[0]) if np.ndim(x) == 0 else out


def _remainder_negative(u, h, kernel: ExponentialKernel, xs, args):
    # x < 0: R(x) = -E[1{L < x} g(x - L)]; L = S - D, integrate with the sampled-free quadrature
    gx, gw = _gauss_legendre(kernel.nodes)
    rp, rm = kernel.r_plus, kernel.r_minus
    out = np.empty(xs.size)
    for i, x in enumerate(xs):
        # condition on S = s, need D > s - x > 0
        s = -np.log1p(-0.5 * (gx + 1.0)) / rp
        total = 0.0
        for sa, wa in zip(s, gw):
            lo = sa - x
            d = lo - np.log1p(-0.5 * (gx + 1.0)) / rm
            z = _interp_array(u, h, x - sa + d)
            vals = np.array([_g(v, *args) for v in z])
            total += 0.5 * wa * np.exp(-rm * lo) * 0.5 * np.dot(gw, vals)
        out[i] = -total
    return out


def _remainder_negative_emp(u, h, kernel: EmpiricalKernel, xs, args):
    out = np.empty(xs.size)
    for i, x in enumerate(xs):
        below = kernel.l < x
        z = _interp_array(u, h, x - kernel.l[below])
        out[i] = -sum(_g(v, *args) for v in z) / kernel.size
    return out


def truncation_sensitivity(kernel: Kernel, grid: Grid, law: OffspringLaw, solution: SolverSolution,
                           **kwargs) -> float:
    """Largest change of ``u`` on ``grid`` when re-solving with ``2 x_max``."""
    wide = Grid(2.0 * grid.x_max, grid.h)
    sol2 = solve(kernel, wide, law, tol=solution.tol, **kwargs)
    return float(np.max(np.abs(sol2.u[: grid.size] - solution.u)))


def integral_of_u(solution: SolverSolution) -> float:
    """Trapezoidal integral of u over [0, x_max], an estimate of E[M]."""
    return float(np.trapezoid(solution.u, dx=solution.h)) if hasattr(np, "trapezoid") \
        else float(np.trapz(solution.u, dx=solution.h))
