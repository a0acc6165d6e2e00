"""Parametric Levy models and samplers for the exponentially killed pair.

Two variants are supported: Brownian motion with drift, whose killed pair
``(L_e, S_e)`` is sampled exactly through its Wiener-Hopf factors, and the
symmetric alpha-stable process.  For the stable process the killed pair is
drawn either on a time grid with Chambers-Mallows-Stuck increments, or from
the stick-breaking representation of the concave majorant, which needs no
time grid and has no discretisation bias in the supremum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import NamedTuple, Union

import numba as nb
import numpy as np

from . import rng as _rng
from .errors import NoRootError, ParameterError, UnsupportedVariantError

BM = 0
STABLE = 1
SAMPLERS = ("stick", "grid")


@dataclass(frozen=True)
class BrownianWithDrift:
    mu: float
    eta: float = 1.0

    def __post_init__(self):
        if not self.eta > 0:
            raise ParameterError(f"eta must be positive, got {self.eta}")

    @property
    def wh_rates(self) -> tuple[float, float]:
        """``(r_plus, r_minus)``: positive roots tied to ``Psi(lambda) = 1``.

        ``S_e ~ Exp(r_plus)`` and ``S_e - L_e ~ Exp(r_minus)``, independent.
        """
        root = math.sqrt(self.mu * self.mu + 2.0 * self.eta * self.eta)
        e2 = self.eta * self.eta
        if self.mu >= 0:
            r_minus = (self.mu + root) / e2
            r_plus = 2.0 / (e2 * r_minus)
        else:
            r_plus = (-self.mu + root) / e2
            r_minus = 2.0 / (e2 * r_plus)
        return r_plus, r_minus

    def to_dict(self) -> dict:
        return {"variant": "bm", "mu": self.mu, "eta": self.eta}


@dataclass(frozen=True)
class SymmetricStable:
    """Symmetric alpha-stable process, ``E exp(i t L_1) = exp(-(scale |t|)**alpha)``."""

    alpha: float
    scale: float = 1.0
    step: float = 1e-3
    sampler: str = "stick"

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise ParameterError(f"alpha must lie in (0, 2), got {self.alpha}")
        if not self.scale > 0:
            raise ParameterError(f"scale must be positive, got {self.scale}")
        if not self.step > 0:
            raise ParameterError(f"step must be positive, got {self.step}")
        if self.sampler not in SAMPLERS:
            raise ParameterError(f"sampler must be one of {SAMPLERS}, got {self.sampler!r}")

    @property
    def tail_constant(self) -> float:
        """``ell_alpha`` with ``nu(x, inf) ~ ell_alpha x**-alpha``; 1/pi for the standard Cauchy."""
        a = self.alpha
        return self.scale ** a * math.gamma(a) * math.sin(math.pi * a / 2.0) / math.pi

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variant"] = "stable"
        return d


LevyModel = Union[BrownianWithDrift, SymmetricStable]


class KilledPair(NamedTuple):
    """Value ``l = L_e`` and running supremum ``s = S_e`` at an Exp(1) time."""

    l: float
    s: float


def model_from_dict(d: dict) -> LevyModel:
    d = dict(d)
    variant = d.pop("variant", None)
    if variant == "bm":
        return BrownianWithDrift(mu=float(d["mu"]), eta=float(d.get("eta", 1.0)))
    if variant == "stable":
        if "mu" in d and d["mu"]:
            raise ParameterError("stable models with drift are not supported")
        return SymmetricStable(alpha=float(d["alpha"]), scale=float(d.get("scale", 1.0)),
                               step=float(d.get("step", 1e-3)),
                               sampler=str(d.get("sampler", "stick")))
    raise ParameterError(f"unknown Levy variant {variant!r}")


def psi(model: LevyModel, lam):
    """Laplace exponent ``log E exp(lam L_1)``."""
    if not isinstance(model, BrownianWithDrift):
        raise UnsupportedVariantError("stable processes have no finite exponential moments")
    return model.mu * lam + 0.5 * model.eta ** 2 * np.square(lam)


def mean(model: LevyModel) -> float | None:
    """``E[L_1]``, or ``None`` when it does not exist (stable, alpha <= 1)."""
    if isinstance(model, BrownianWithDrift):
        return model.mu
    return 0.0 if model.alpha > 1.0 else None


def cramer_root(model: LevyModel) -> float:
    """Positive root ``omega`` of ``Psi(omega) = 0``."""
    if not isinstance(model, BrownianWithDrift):
        raise NoRootError("Cramer root only available for Brownian motion with drift")
    if model.mu >= 0:
        raise NoRootError(f"no positive root of Psi when mu = {model.mu} >= 0")
    return -2.0 * model.mu / model.eta ** 2


def model_params(model: LevyModel) -> tuple[int, float, float, float, int]:
    """Flatten a model for the numba kernels: (kind, p0, p1, step, method)."""
    if isinstance(model, BrownianWithDrift):
        rp, rm = model.wh_rates
        return BM, rp, rm, 1.0, 0
    return STABLE, model.alpha, model.scale, model.step, SAMPLERS.index(model.sampler)


# --- numba kernels ----------------------------------------------------------


@nb.njit(cache=True)
def stable_unit(state, alpha):
    """Standard symmetric alpha-stable variate (Chambers-Mallows-Stuck)."""
    v = math.pi * (_rng.uniform(state) - 0.5)
    if alpha == 1.0:
        return math.tan(v)
    w = -math.log(_rng.uniform(state))
    return (math.sin(alpha * v) / math.cos(v) ** (1.0 / alpha)
            * (math.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha))


@nb.njit(cache=True)
def normal(state):
    u1 = _rng.uniform(state)
    u2 = _rng.uniform(state)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


_STICK_TOL = 1e-9


@nb.njit(cache=True)
def stable_pair_stick(state, alpha, scale, horizon):
    """(L_T, S_T) from uniform stick-breaking of [0, T]; exact up to a 1e-9 remainder."""
    rest = horizon
    l = 0.0
    s = 0.0
    stop = (_STICK_TOL / scale) ** alpha
    while rest > stop:
        piece = rest * _rng.uniform(state)
        xi = scale * piece ** (1.0 / alpha) * stable_unit(state, alpha)
        l += xi
        if xi > 0.0:
            s += xi
        rest -= piece
    if rest > 0.0:
        xi = scale * rest ** (1.0 / alpha) * stable_unit(state, alpha)
        l += xi
        if xi > 0.0:
            s += xi
    return l, s


@nb.njit(cache=True)
def stable_pair_grid(state, alpha, scale, horizon, step):
    """(L_T, max over grid of L) with mesh ``step`` and a final partial step."""
    n_full = int(horizon / step)
    last = horizon - n_full * step
    inc = scale * step ** (1.0 / alpha)
    l = 0.0
    s = 0.0
    for _ in range(n_full):
        l += inc * stable_unit(state, alpha)
        if l > s:
            s = l
    if last > 0.0:
        l += scale * last ** (1.0 / alpha) * stable_unit(state, alpha)
        if l > s:
            s = l
    return l, s


@nb.njit(cache=True)
def killed_pair(state, kind, p0, p1, step, method):
    """One draw of (L_e, S_e) for a flattened model."""
    if kind == BM:
        s = _rng.exponential(state, p0)
        d = _rng.exponential(state, p1)
        return s - d, s
    horizon = -math.log(_rng.uniform(state))
    if method == 0:
        return stable_pair_stick(state, p0, p1, horizon)
    return stable_pair_grid(state, p0, p1, horizon, step)


@nb.njit(cache=True)
def _killed_pairs(seed, kind, p0, p1, step, method, n):
    state = np.empty(4, dtype=np.uint64)
    _rng.seed_state(seed, np.uint64(0), state)
    ls = np.empty(n)
    ss = np.empty(n)
    for i in range(n):
        ls[i], ss[i] = killed_pair(state, kind, p0, p1, step, method)
    return ls, ss


@nb.njit(cache=True)
def _bm_path_pairs(seed, mu, eta, step, n, bridge):
    state = np.empty(4, dtype=np.uint64)
    _rng.seed_state(seed, np.uint64(0), state)
    ls = np.empty(n)
    ss = np.empty(n)
    sd = eta * math.sqrt(step)
    var = eta * eta * step
    for i in range(n):
        horizon = -math.log(_rng.uniform(state))
        n_full = int(horizon / step)
        last = horizon - n_full * step
        l = 0.0
        s = 0.0
        for k in range(n_full + 1):
            dt = step if k < n_full else last
            if dt <= 0.0:
                break
            nxt = l + mu * dt + (sd if k < n_full else eta * math.sqrt(dt)) * normal(state)
            if bridge:
                # exact maximum of the Brownian bridge between the two grid values
                v = var if k < n_full else eta * eta * dt
                top = 0.5 * (l + nxt + math.sqrt((nxt - l) ** 2 - 2.0 * v * math.log(_rng.uniform(state))))
            else:
                top = nxt
            if top > s:
                s = top
            l = nxt
        ls[i] = l
        ss[i] = s
    return ls, ss


def _seed_from(rng: np.random.Generator) -> np.uint64:
    return np.uint64(int(rng.integers(0, 2 ** 63)))


def sample_killed_pairs(model: LevyModel, rng: np.random.Generator, size: int,
                        step: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Arrays ``(l, s)`` of ``size`` independent killed pairs."""
    if step is not None:
        if not step > 0:
            raise ParameterError(f"step must be positive, got {step}")
        if isinstance(model, SymmetricStable):
            model = SymmetricStable(model.alpha, model.scale, step, model.sampler)
    kind, p0, p1, st, method = model_params(model)
    return _killed_pairs(_seed_from(rng), kind, p0, p1, st, method, int(size))


def sample_killed_pair(model: LevyModel, rng: np.random.Generator,
                       step: float | None = None) -> KilledPair:
    l, s = sample_killed_pairs(model, rng, 1, step)
    return KilledPair(float(l[0]), float(s[0]))


def sample_bm_path_pairs(model: BrownianWithDrift, rng: np.random.Generator, size: int,
                         step: float = 1e-4, bridge: bool = True):
    """Killed pairs from an Euler path of mesh ``step``.

    With ``bridge=True`` each step's maximum is drawn from the Brownian bridge
    between its endpoints, which removes the grid bias of the supremum.  This
    route shares nothing with the Wiener-Hopf sampler and serves as its check.
    """
    return _bm_path_pairs(_seed_from(rng), model.mu, model.eta, float(step), int(size), bool(bridge))


def survival_sup(model: LevyModel, x: float, n_mc: int = 100_000,
                 rng: np.random.Generator | None = None) -> tuple[float, float]:
    """``P(S_e >= x)`` and its standard error (exact, stderr 0, for Brownian motion)."""
    if x <= 0:
        return 1.0, 0.0
    if isinstance(model, BrownianWithDrift):
        return math.exp(-model.wh_rates[0] * x), 0.0
    if rng is None:
        rng = np.random.default_rng()
    _, s = sample_killed_pairs(model, rng, n_mc)
    p = float(np.mean(s >= x))
    return p, math.sqrt(p * (1.0 - p) / n_mc)
