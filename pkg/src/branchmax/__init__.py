"""Maxima of critical branching Levy processes: simulation, fixed point, tail asymptotics."""

import warnings

from numba.core.errors import NumbaWarning

# numba falls back from TBB to the OpenMP/workqueue layer and says so once
warnings.filterwarnings("ignore", category=NumbaWarning, message=".*TBB.*")

from .asymptotics import (TailCurve, TheoryPrediction, auto_window, compare, fit_exponential_tail,  # noqa: E402
                          fit_power_tail, predict)
from .branching import (OutcomeBatch, RunOutcome, SimLimits, estimate_tail, extinction_tail,  # noqa: E402
                        simulate_batch, simulate_max)
from .errors import *  # noqa: E402,F401,F403
from .fixedpoint import EmpiricalKernel, ExponentialKernel, Grid, apply_T, make_kernel, remainder, solve  # noqa: E402
from .levy import BrownianWithDrift, SymmetricStable, cramer_root, sample_killed_pair, sample_killed_pairs  # noqa: E402
from .offspring import OffspringLaw, F_of, from_table, make_canonical, pmf, sample_offspring  # noqa: E402

__version__ = "0.1.0"
