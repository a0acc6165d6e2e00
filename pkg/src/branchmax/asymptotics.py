"""Closed-form tail predictions for the maximum and tail-fitting helpers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FitError, ParameterError
from .levy import BrownianWithDrift, LevyModel, SymmetricStable, cramer_root
from .offspring import OffspringLaw

REGIMES = ("positive-mean", "negative-mean", "centered", "heavy-tail")


@dataclass
class TailCurve:
    """Survival estimates on an increasing grid.

    ``upper`` (optional) is the censoring upper bound; ``n`` the sample size
    behind the binomial standard errors, ``None`` for computed curves.
    """

    x: np.ndarray
    value: np.ndarray
    stderr: np.ndarray
    upper: np.ndarray | None = None
    upper_stderr: np.ndarray | None = None
    n: int | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.value = np.asarray(self.value, dtype=np.float64)
        self.stderr = np.broadcast_to(np.asarray(self.stderr, dtype=np.float64), self.x.shape).copy()
        if self.upper is not None:
            self.upper = np.asarray(self.upper, dtype=np.float64)

    @classmethod
    def exact(cls, x, value) -> "TailCurve":
        x = np.asarray(x, dtype=np.float64)
        return cls(x, np.asarray(value, dtype=np.float64), np.zeros_like(x))


@dataclass(frozen=True)
class TheoryPrediction:
    regime: str
    decay: str  # "power" or "exponential"
    exponent: float  # power exponent, or exponential rate
    constant: float | None  # None: implicit constant

    def to_dict(self) -> dict:
        return {"regime": self.regime, "decay": self.decay, "exponent": self.exponent,
                "constant": self.constant if self.constant is not None else "implicit"}


def gamma_2mb(beta: float) -> float:
    return math.gamma(2.0 - beta)


def predict(model: LevyModel, law: OffspringLaw) -> TheoryPrediction:
    beta = law.beta
    cg = law.c_beta * gamma_2mb(beta)
    if isinstance(model, BrownianWithDrift):
        if model.mu > 0:
            return TheoryPrediction("positive-mean", "power", 1.0 / (beta - 1.0),
                                    (model.mu / cg) ** (1.0 / (beta - 1.0)))
        if model.mu < 0:
            return TheoryPrediction("negative-mean", "exponential", cramer_root(model), None)
        sigma2 = model.eta ** 2
        return TheoryPrediction("centered", "power", 2.0 / (beta - 1.0),
                                ((beta + 1.0) * sigma2 / (cg * (beta - 1.0))) ** (1.0 / (beta - 1.0)))
    if isinstance(model, SymmetricStable):
        const = model.tail_constant ** (1.0 / beta) * ((beta - 1.0) / cg) ** (1.0 / beta)
        return TheoryPrediction("heavy-tail", "power", model.alpha / beta, const)
    raise ParameterError(f"no regime for model {model!r}")


# --- fitting ----------------------------------------------------------------


@dataclass(frozen=True)
class PowerFit:
    exponent: float
    constant: float
    exponent_stderr: float
    constant_stderr: float
    x_lo: float
    x_hi: float
    n_points: int
    pinned: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class ExponentialFit:
    rate: float
    rate_stderr: float
    constant: float
    x_lo: float
    x_hi: float
    n_points: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _window_points(curve: TailCurve, x_lo, x_hi, min_points=5):
    inside = (curve.x >= x_lo) & (curve.x <= x_hi) & (curve.value > 0)
    if inside.sum() < min_points:
        raise FitError(f"only {int(inside.sum())} points in [{x_lo}, {x_hi}], need {min_points}")
    good = inside & (curve.value > 10.0 * curve.stderr)
    if good.sum() < min_points:
        raise FitError(f"signal below noise: {int(good.sum())} points in [{x_lo}, {x_hi}] "
                       "have value > 10 stderr")
    x = curve.x[good]
    v = curve.value[good]
    rel = curve.stderr[good] / v
    if np.all(rel > 0):
        return x, v, 1.0 / rel ** 2
    return x, v, None


def _wls(X, y, w):
    """Least squares; ``w`` are inverse variances, or ``None`` for plain OLS.

    Weighted fits inflate the covariance by the reduced chi-square when it
    exceeds 1; plain fits always scale by it.
    """
    plain = w is None
    if plain:
        w = np.ones_like(y)
    WX = X * w[:, None]
    cov = np.linalg.inv(X.T @ WX)
    coef = cov @ (WX.T @ y)
    resid = y - X @ coef
    dof = max(1, y.size - X.shape[1])
    chi2 = float(np.sum(w * resid ** 2)) / dof
    return coef, cov * (chi2 if plain else max(1.0, chi2))


def fit_power_tail(curve: TailCurve, x_lo: float, x_hi: float,
                   exponent: float | None = None) -> PowerFit:
    """Weighted log-log regression ``log value = log C - a log x``.

    With ``exponent`` given, only the constant is fitted, at that exponent.
    """
    x, v, w = _window_points(curve, x_lo, x_hi)
    lx = np.log(x)
    y = np.log(v)
    if exponent is not None:
        r = y + exponent * lx
        coef, cov = _wls(np.ones((x.size, 1)), r, w)
        c = math.exp(coef[0])
        return PowerFit(float(exponent), c, 0.0, c * math.sqrt(cov[0, 0]),
                        float(x[0]), float(x[-1]), int(x.size), pinned=True)
    X = np.column_stack([np.ones_like(lx), lx])
    coef, cov = _wls(X, y, w)
    c = math.exp(coef[0])
    return PowerFit(float(-coef[1]), c, float(math.sqrt(cov[1, 1])), c * float(math.sqrt(cov[0, 0])),
                    float(x[0]), float(x[-1]), int(x.size))


def fit_exponential_tail(curve: TailCurve, x_lo: float, x_hi: float) -> ExponentialFit:
    """Weighted regression ``log value = log C - rate x``."""
    x, v, w = _window_points(curve, x_lo, x_hi)
    X = np.column_stack([np.ones_like(x), x])
    coef, cov = _wls(X, np.log(v), w)
    return ExponentialFit(float(-coef[1]), float(math.sqrt(cov[1, 1])), float(math.exp(coef[0])),
                          float(x[0]), float(x[-1]), int(x.size))


def loglog_slope(curve: TailCurve, x_lo: float, x_hi: float) -> tuple[float, float]:
    """Unweighted least-squares slope of log value on log x over the window.

    Every grid point carries the same weight, so on a log-spaced grid each
    decade counts equally.  Returns (slope, stderr of slope).
    """
    inside = (curve.x >= x_lo) & (curve.x <= x_hi) & (curve.value > 0)
    if inside.sum() < 5:
        raise FitError(f"only {int(inside.sum())} positive points in [{x_lo}, {x_hi}]")
    lx = np.log(curve.x[inside])
    y = np.log(curve.value[inside])
    X = np.column_stack([np.ones_like(lx), lx])
    coef, cov = _wls(X, y, None)
    return float(coef[1]), float(math.sqrt(cov[1, 1]))


def auto_window(curve: TailCurve, start_level: float = 0.05, snr: float = 25.0) -> tuple[float, float]:
    """Default fit window.

    Starts at the first x where the estimate has dropped to ``start_level``
    and ends at the last x where it still exceeds ``snr`` standard errors and
    the censoring bracket is narrower than one standard error.
    """
    below = np.nonzero(curve.value <= start_level)[0]
    if below.size == 0:
        raise FitError(f"curve never drops below {start_level}")
    ok = curve.value >= snr * curve.stderr
    ok &= curve.value > 0
    if curve.upper is not None:
        ok &= (curve.upper - curve.value) < np.maximum(curve.stderr, 1e-300)
    ok_idx = np.nonzero(ok)[0]
    ok_idx = ok_idx[ok_idx >= below[0]]
    if ok_idx.size == 0:
        raise FitError("no point past the start level has enough signal")
    return float(curve.x[below[0]]), float(curve.x[ok_idx[-1]])


# --- comparison -------------------------------------------------------------


def compare(pred: TheoryPrediction, fit, tolerances: dict) -> dict:
    """Pass/fail report of a fit against a prediction.

    ``tolerances`` holds ``exponent`` (absolute; also used for rates) and
    optionally ``constant`` (relative).  A power fit is compared on its
    exponent; the constant check uses ``fit.constant`` as given, so pass a
    pinned fit (or a ``constant_fit``) when the constant is wanted at the
    predicted exponent.
    """
    constant_fit = tolerances.get("constant_fit")
    checks = {}
    if pred.decay == "power":
        if not isinstance(fit, PowerFit):
            raise ParameterError("power prediction needs a power fit")
        fitted_exp = fit.exponent
    else:
        if not isinstance(fit, ExponentialFit):
            raise ParameterError("exponential prediction needs an exponential fit")
        fitted_exp = fit.rate
    tol_e = float(tolerances["exponent"])
    err = abs(fitted_exp - pred.exponent)
    checks["exponent"] = {"predicted": pred.exponent, "fitted": fitted_exp,
                          "abs_error": err, "tolerance": tol_e,
                          "status": "pass" if err <= tol_e else "fail"}
    if pred.constant is None or "constant" not in tolerances:
        checks["constant"] = {"status": "skipped",
                              "fitted": getattr(fit, "constant", None),
                              "reason": "implicit constant" if pred.constant is None else "no tolerance"}
    else:
        c_fit = (constant_fit if constant_fit is not None else fit).constant
        rel = abs(c_fit - pred.constant) / pred.constant
        tol_c = float(tolerances["constant"])
        checks["constant"] = {"predicted": pred.constant, "fitted": c_fit, "rel_error": rel,
                              "tolerance": tol_c, "status": "pass" if rel <= tol_c else "fail"}
    passed = all(c["status"] != "fail" for c in checks.values())
    return {"regime": pred.regime, "predicted": pred.to_dict(), "fitted": fit.to_dict(),
            "window": [fit.x_lo, fit.x_hi],
            "tolerances": {k: v for k, v in tolerances.items() if k != "constant_fit"},
            "checks": checks, "pass": passed}
