"""Event-driven simulation of the critical branching Levy process.

Every run processes a depth-first work stack of particles.  A particle born
at ``(t, x)`` lives an Exp(1) time ``e``, contributes ``x + S_e`` as a
candidate maximum, and leaves ``N`` children at ``(t + e, x + L_e)``.
Siblings share their birth point, so the stack stores one entry per litter
together with its multiplicity.

Runs use independent streams keyed by (seed, run index), so a batch is
bit-identical whatever the thread count or chunking.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass

import numba as nb
import numpy as np

from . import rng as _rng
from .asymptotics import TailCurve
from .errors import ParameterError
from .levy import BM, BrownianWithDrift, LevyModel, model_params, stable_pair_grid, stable_pair_stick, normal
from .offspring import OffspringLaw, offspring_from_uniform

log = logging.getLogger(__name__)

THREADS_ENV = "BRANCHMAX_THREADS"


@dataclass(frozen=True)
class SimLimits:
    particle_cap: int = 1_000_000

    def __post_init__(self):
        if self.particle_cap < 1:
            raise ParameterError("particle_cap must be at least 1")


@dataclass(frozen=True)
class RunOutcome:
    max: float
    extinction_time: float
    particles: int
    censored: bool


@dataclass
class OutcomeBatch:
    """Columnar outcomes of runs ``first_index .. first_index + len - 1``."""

    max: np.ndarray
    extinction_time: np.ndarray
    particles: np.ndarray
    censored: np.ndarray
    first_index: int = 0

    def __len__(self):
        return self.max.size

    def __getitem__(self, i) -> RunOutcome:
        return RunOutcome(float(self.max[i]), float(self.extinction_time[i]),
                          int(self.particles[i]), bool(self.censored[i]))

    @property
    def run_index(self) -> np.ndarray:
        return np.arange(self.first_index, self.first_index + len(self), dtype=np.int64)

    @property
    def censored_fraction(self) -> float:
        return float(np.mean(self.censored)) if len(self) else 0.0

    @classmethod
    def from_outcomes(cls, outcomes) -> "OutcomeBatch":
        outcomes = list(outcomes)
        return cls(np.array([o.max for o in outcomes], dtype=np.float64),
                   np.array([o.extinction_time for o in outcomes], dtype=np.float64),
                   np.array([o.particles for o in outcomes], dtype=np.int64),
                   np.array([o.censored for o in outcomes], dtype=np.bool_))

    @classmethod
    def concat(cls, batches) -> "OutcomeBatch":
        batches = list(batches)
        return cls(np.concatenate([b.max for b in batches]),
                   np.concatenate([b.extinction_time for b in batches]),
                   np.concatenate([b.particles for b in batches]),
                   np.concatenate([b.censored for b in batches]),
                   batches[0].first_index if batches else 0)


# --- kernels ----------------------------------------------------------------


@nb.njit(cache=True)
def _bm_triple(state, mu, eta):
    # lifetime, endpoint, and exact bridge maximum given the endpoint
    e = -math.log(_rng.uniform(state))
    l = mu * e + eta * math.sqrt(e) * normal(state)
    s = 0.5 * (l + math.sqrt(l * l - 2.0 * eta * eta * e * math.log(_rng.uniform(state))))
    return e, l, s


@nb.njit(cache=True)
def killed_triple(state, kind, p0, p1, step, method):
    """(e, L_e, S_e) with the lifetime, drawn jointly."""
    if kind == BM:
        return _bm_triple(state, p0, p1)
    e = -math.log(_rng.uniform(state))
    if method == 0:
        l, s = stable_pair_stick(state, p0, p1, e)
    else:
        l, s = stable_pair_grid(state, p0, p1, e, step)
    return e, l, s


@nb.njit(cache=True)
def _one_run(state, kind, p0, p1, step, method, tail, beta, log_coef, cap):
    size = 64
    times = np.empty(size)
    pos = np.empty(size)
    mult = np.empty(size, dtype=np.int64)
    top = 1
    times[0] = 0.0
    pos[0] = 0.0
    mult[0] = 1
    best = 0.0
    last_death = 0.0
    count = 0
    censored = False
    while top > 0:
        if count >= cap:
            censored = True
            break
        t = times[top - 1]
        x = pos[top - 1]
        mult[top - 1] -= 1
        if mult[top - 1] == 0:
            top -= 1
        count += 1
        e, l, s = killed_triple(state, kind, p0, p1, step, method)
        if x + s > best:
            best = x + s
        death = t + e
        if death > last_death:
            last_death = death
        n = offspring_from_uniform(_rng.uniform(state), tail, beta, log_coef)
        if n > 0:
            if top == size:
                size *= 2
                times2 = np.empty(size)
                pos2 = np.empty(size)
                mult2 = np.empty(size, dtype=np.int64)
                times2[:top] = times[:top]
                pos2[:top] = pos[:top]
                mult2[:top] = mult[:top]
                times = times2
                pos = pos2
                mult = mult2
            times[top] = death
            pos[top] = x + l
            mult[top] = n
            top += 1
    return best, last_death, count, censored


@nb.njit(cache=True, parallel=True)
def _run_batch(seed, first, n_runs, kind, p0, p1, step, method, tail, beta, log_coef, cap):
    best = np.empty(n_runs)
    ext = np.empty(n_runs)
    count = np.empty(n_runs, dtype=np.int64)
    cens = np.empty(n_runs, dtype=np.bool_)
    for i in nb.prange(n_runs):
        state = np.empty(4, dtype=np.uint64)
        _rng.seed_state(seed, np.uint64(first + i), state)
        best[i], ext[i], count[i], cens[i] = _one_run(
            state, kind, p0, p1, step, method, tail, beta, log_coef, cap)
    return best, ext, count, cens


def _kernel_args(model: LevyModel):
    kind, p0, p1, step, method = model_params(model)
    if isinstance(model, BrownianWithDrift):
        p0, p1 = model.mu, model.eta
    return kind, p0, p1, step, method


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return nb.config.NUMBA_NUM_THREADS


def simulate_batch(model: LevyModel, law: OffspringLaw, runs: int, seed: int,
                   limits: SimLimits = SimLimits(), threads: int | None = None,
                   first_index: int = 0, chunk: int = 100_000) -> OutcomeBatch:
    """Simulate runs ``first_index .. first_index + runs - 1`` of stream ``seed``."""
    if runs < 0:
        raise ParameterError("runs must be nonnegative")
    threads = default_threads() if threads is None else threads
    nb.set_num_threads(max(1, min(int(threads), nb.config.NUMBA_NUM_THREADS)))
    kind, p0, p1, step, method = _kernel_args(model)
    seed64 = np.uint64(int(seed) & ((1 << 64) - 1))
    parts = []
    done = 0
    while done < runs or not parts:
        m = min(chunk, runs - done)
        best, ext, count, cens = _run_batch(
            seed64, np.uint64(first_index + done), m, kind, p0, p1, step, method,
            law.tail, law.beta, law.log_tail_coef, int(limits.particle_cap))
        parts.append(OutcomeBatch(best, ext, count, cens, first_index + done))
        done += m
        if runs > chunk:
            log.info("simulated %d / %d runs", done, runs)
    out = OutcomeBatch.concat(parts)
    out.first_index = first_index
    return out


def simulate_max(model: LevyModel, law: OffspringLaw, rng: np.random.Generator,
                 limits: SimLimits = SimLimits()) -> RunOutcome:
    """One realization; its stream is seeded from ``rng``."""
    seed = int(rng.integers(0, 2 ** 63))
    return simulate_batch(model, law, 1, seed, limits, threads=1)[0]


# --- survival estimates -----------------------------------------------------


def _bracket(values, censored, grid, strict):
    n = values.size
    ordered = np.sort(values)
    side = "right" if strict else "left"
    exceed = n - np.searchsorted(ordered, grid, side=side)
    cens_values = np.sort(values[censored])
    cens_exceed = cens_values.size - np.searchsorted(cens_values, grid, side=side)
    lower = exceed / n
    upper = (exceed + (censored.sum() - cens_exceed)) / n
    return lower, upper


def _as_batch(outcomes) -> OutcomeBatch:
    if isinstance(outcomes, OutcomeBatch):
        return outcomes
    return OutcomeBatch.from_outcomes(outcomes)


def _check_grid(grid):
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0:
        raise ParameterError("grid must be a nonempty 1-d array")
    if np.any(grid < 0) or np.any(np.diff(grid) <= 0):
        raise ParameterError("grid must be nonnegative and strictly increasing")
    return grid


def _curve(grid, lower, upper, n):
    return TailCurve(x=grid, value=lower, stderr=np.sqrt(lower * (1.0 - lower) / n),
                     upper=upper, upper_stderr=np.sqrt(upper * (1.0 - upper) / n), n=n)


def estimate_tail(outcomes, x_grid) -> TailCurve:
    """Empirical ``P(M >= x)`` with censoring brackets.

    The point estimate counts censored runs only through their observed
    maximum (a lower bound); ``upper`` counts them as exceeding every ``x``.
    """
    b = _as_batch(outcomes)
    if len(b) == 0:
        raise ParameterError("no outcomes to estimate from")
    grid = _check_grid(x_grid)
    lower, upper = _bracket(b.max, b.censored, grid, strict=False)
    return _curve(grid, lower, upper, len(b))


def extinction_tail(outcomes, t_grid) -> TailCurve:
    """Empirical ``P(zeta > t)`` bracketed the same way as :func:`estimate_tail`."""
    b = _as_batch(outcomes)
    if len(b) == 0:
        raise ParameterError("no outcomes to estimate from")
    grid = _check_grid(t_grid)
    lower, upper = _bracket(b.extinction_time, b.censored, grid, strict=True)
    return _curve(grid, lower, upper, len(b))
