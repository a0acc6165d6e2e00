"""Critical offspring laws in the domain of attraction of a beta-stable law.

The built-in family has generating function ``g(s) = s + c (1 - s)**beta``,
so that ``F(z) = c z**beta`` exactly and every tail sum has a closed form in
log-Gamma.  A tabulated law can be supplied instead through
:func:`from_table`, at the price of series evaluation of ``F``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .errors import DomainError, ParameterError

#: Size of the cached cumulative table used for inverse-CDF sampling.
TABLE_SIZE = 10_000


@dataclass(frozen=True, eq=False)
class OffspringLaw:
    """Critical offspring distribution ``(p_k)`` with ``sum_{k>=n} p_k ~ c_beta n**-beta``.

    ``tail`` holds ``P(N >= n)`` for ``n = 0..len(tail)-1``.  For the canonical
    family the tail keeps going past the table and is evaluated analytically;
    for a tabulated law the last entry is 0.
    """

    beta: float
    c: float
    c_beta: float
    family: str
    tail: np.ndarray = field(repr=False)
    pmf_table: np.ndarray | None = field(default=None, repr=False)

    @property
    def canonical(self) -> bool:
        return self.family == "canonical"

    @property
    def log_tail_coef(self) -> float:
        # log of c (beta-1) / Gamma(2-beta), the prefactor of the analytic tail
        if not self.canonical:
            return -math.inf
        return math.log(self.c * (self.beta - 1.0)) - math.lgamma(2.0 - self.beta)

    def to_dict(self) -> dict:
        if self.canonical:
            return {"family": "canonical", "beta": self.beta, "c": self.c}
        return {"family": "table", "beta": self.beta, "c_beta": self.c_beta,
                "pmf": [float(p) for p in self.pmf_table]}


def make_canonical(beta: float, c: float) -> OffspringLaw:
    """Law with generating function ``s + c (1-s)**beta``.

    Requires ``1 < beta < 2`` and ``0 < c <= 1/beta``; the upper bound keeps
    ``p_1 = 1 - c beta`` nonnegative.
    """
    beta = float(beta)
    c = float(c)
    if not 1.0 < beta < 2.0:
        raise ParameterError(f"beta must lie in (1, 2), got {beta}")
    if not 0.0 < c <= 1.0 / beta * (1.0 + 1e-15):
        raise ParameterError(f"c must lie in (0, 1/beta] = (0, {1.0 / beta}], got {c}")
    c_beta = c * (beta - 1.0) / math.gamma(2.0 - beta)
    n = np.arange(TABLE_SIZE + 1, dtype=np.float64)
    tail = _canonical_tail_array(n, beta, c)
    return OffspringLaw(beta=beta, c=c, c_beta=c_beta, family="canonical", tail=tail)


def from_table(pmf, beta: float, c_beta: float, rtol: float = 0.1) -> OffspringLaw:
    """Tabulated critical law with a declared stable constant.

    The table must be a probability vector with mean 1.  The declared
    ``c_beta`` is checked against ``n**beta * P(N >= n)`` over the upper half
    of the support, where a finite table can still mimic the stable tail.
    """
    p = np.asarray(pmf, dtype=np.float64)
    if p.ndim != 1 or p.size < 3 or np.any(p < 0):
        raise ParameterError("pmf table must be a 1-d nonnegative array of length >= 3")
    if not 1.0 < beta < 2.0:
        raise ParameterError(f"beta must lie in (1, 2), got {beta}")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ParameterError(f"pmf table sums to {p.sum()!r}, not 1")
    mean = float(np.dot(np.arange(p.size), p))
    if abs(mean - 1.0) > 1e-9:
        raise ParameterError(f"pmf table has mean {mean!r}; a critical law needs mean 1")
    tail = np.concatenate([np.cumsum(p[::-1])[::-1], [0.0]])
    tail = np.minimum(tail, 1.0)
    tail[0] = 1.0
    k = np.arange(p.size // 4, p.size // 2)
    ratio = k.astype(float) ** beta * tail[k]
    if k.size == 0 or np.max(np.abs(ratio / c_beta - 1.0)) > rtol:
        raise ParameterError(
            "declared c_beta is inconsistent with the table tail "
            f"(n^beta P(N>=n) spans [{ratio.min():.4g}, {ratio.max():.4g}])")
    return OffspringLaw(beta=float(beta), c=float(p[0]), c_beta=float(c_beta),
                        family="table", tail=tail, pmf_table=p)


def law_from_dict(d: dict) -> OffspringLaw:
    family = d.get("family", "canonical")
    if family == "canonical":
        return make_canonical(d["beta"], d["c"])
    if family == "table":
        return from_table(d["pmf"], d["beta"], d["c_beta"])
    raise ParameterError(f"unknown offspring family {family!r}")


def _canonical_tail_array(n, beta, c):
    n = np.asarray(n, dtype=np.float64)
    out = np.empty_like(n)
    log_coef = math.log(c * (beta - 1.0)) - math.lgamma(2.0 - beta)
    big = n >= 2
    from scipy.special import gammaln

    out[big] = np.exp(log_coef + gammaln(n[big] - beta) - gammaln(n[big]))
    out[n == 0] = 1.0
    out[n == 1] = 1.0 - c
    return out


def pmf(law: OffspringLaw, k) -> float | np.ndarray:
    """``P(N = k)``; vectorized over ``k``."""
    scalar = np.ndim(k) == 0
    k = np.atleast_1d(np.asarray(k))
    if np.any(k < 0):
        raise DomainError("offspring count must be nonnegative")
    if law.canonical:
        beta, c = law.beta, law.c
        out = np.zeros(k.shape, dtype=np.float64)
        out[k == 0] = c
        out[k == 1] = 1.0 - c * beta
        big = k >= 2
        if np.any(big):
            from scipy.special import gammaln

            kb = k[big].astype(np.float64)
            # c (-1)^k binom(beta, k) = c Gamma(k - beta) / (Gamma(-beta) k!); Gamma(-beta) > 0 here
            out[big] = np.exp(math.log(c) + gammaln(kb - beta) - gammaln(kb + 1.0)
                              - math.lgamma(-beta))
    else:
        table = law.pmf_table
        out = np.where(k < table.size, table[np.minimum(k, table.size - 1)], 0.0)
    return float(out[0]) if scalar else out


def tail_sum(law: OffspringLaw, n) -> float | np.ndarray:
    """``P(N >= n) = sum_{k >= n} p_k``.

    Canonical family: ``c (-1)^n binom(beta-1, n-1)`` for ``n >= 2``, which is
    what the alternating binomial partial sums telescope to.
    """
    scalar = np.ndim(n) == 0
    n = np.atleast_1d(np.asarray(n))
    if np.any(n < 0):
        raise DomainError("n must be nonnegative")
    if law.canonical:
        out = _canonical_tail_array(n, law.beta, law.c)
    else:
        t = law.tail
        out = np.where(n < t.size, t[np.minimum(n, t.size - 1)], 0.0)
    return float(out[0]) if scalar else out


def stable_constant(law: OffspringLaw) -> float:
    """``c_beta = lim n**beta P(N >= n)``."""
    return law.c_beta


def F_of(law: OffspringLaw, z):
    """``F(z) = z - 1 + sum_n p_n (1 - z)**n`` on ``[0, 1]``."""
    z_arr = np.asarray(z, dtype=np.float64)
    if np.any((z_arr < 0.0) | (z_arr > 1.0)) or np.any(np.isnan(z_arr)):
        raise DomainError("F is defined on [0, 1] only")
    if law.canonical:
        out = law.c * z_arr ** law.beta
    else:
        out = np.vectorize(lambda v: F_series(law.pmf_table, v))(z_arr)
    return float(out) if np.ndim(out) == 0 else out


def F_series(probs, z: float, tail_bound=None, max_terms: int = 10_000_000) -> float:
    """Direct summation of ``z - 1 + sum_n p_n (1-z)**n``.

    ``probs`` is either an array of ``p_n`` or a callable ``n -> p_n`` (vectorized).
    Stops once the summand falls below 1e-16 and, when ``tail_bound(n)``
    (an upper bound on ``sum_{k >= n} p_k``) is given, once the neglected mass
    ``tail_bound(n) (1-z)**n`` does too.
    """
    if not 0.0 <= z <= 1.0:
        raise DomainError("F is defined on [0, 1] only")
    if not callable(probs):
        p = np.asarray(probs, dtype=np.float64)
        n = np.arange(p.size)
        return float(z - 1.0 + np.sum(p * (1.0 - z) ** n))
    total = 0.0
    start = 0
    chunk = 4096
    q = 1.0 - z
    while start < max_terms:
        n = np.arange(start, start + chunk)
        terms = probs(n) * np.exp(n * math.log1p(-z)) if q > 0 else np.where(n == 0, probs(n), 0.0)
        total += float(np.sum(terms))
        end = start + chunk
        small = terms[-1] < 1e-16
        if small and (tail_bound is None or tail_bound(end) * q ** end < 1e-16):
            break
        start = end
        chunk = min(chunk * 2, 1 << 20)
    return float(z - 1.0 + total)


# --- sampling -------------------------------------------------------------


@nb.njit(cache=True)
def _canonical_tail_at(n, beta, log_coef):
    return math.exp(log_coef + math.lgamma(n - beta) - math.lgamma(n))


@nb.njit(cache=True)
def offspring_from_uniform(u, tail, beta, log_coef):
    """Inverse CDF: the largest ``n`` with ``P(N >= n) >= u``, for ``u`` in (0, 1]."""
    last = tail.size - 1
    if u > tail[1]:
        return np.int64(0)
    if u > tail[last]:
        lo = 1
        hi = last
        # invariant: tail[lo] >= u > tail[hi]
        while hi - lo > 1:
            mid = (lo + hi) >> 1
            if tail[mid] >= u:
                lo = mid
            else:
                hi = mid
        return np.int64(lo)
    if log_coef == -math.inf:
        return np.int64(last)
    # analytic tail beyond the table: bracket then bisect
    guess = math.exp((log_coef - math.log(u)) / beta)
    lo = float(last)
    hi = max(guess * 2.0 + 2.0, lo + 1.0)
    while _canonical_tail_at(hi, beta, log_coef) >= u:
        lo = hi
        hi *= 2.0
    if guess > lo and guess < hi:
        g = math.floor(guess)
        if _canonical_tail_at(g, beta, log_coef) >= u:
            lo = g
        else:
            hi = g
    while hi - lo > 1.0:
        mid = math.floor((lo + hi) / 2.0)
        if _canonical_tail_at(mid, beta, log_coef) >= u:
            lo = mid
        else:
            hi = mid
    return np.int64(lo)


@nb.njit(cache=True)
def _sample_many(us, tail, beta, log_coef):
    out = np.empty(us.size, dtype=np.int64)
    for i in range(us.size):
        out[i] = offspring_from_uniform(us[i], tail, beta, log_coef)
    return out


def sample_offspring(law: OffspringLaw, rng: np.random.Generator, size=None):
    """Draw offspring counts by inverse CDF; ``size=None`` returns one int."""
    n = 1 if size is None else int(np.prod(size))
    us = 1.0 - rng.random(n)
    out = _sample_many(us, law.tail, law.beta, law.log_tail_coef)
    if size is None:
        return int(out[0])
    return out.reshape(size)
