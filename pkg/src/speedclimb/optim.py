"""Bounded minimization used for covariance-parameter fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

MAX_EVALS = 2000
FTOL = 1e-8
MAX_RESTARTS = 10


@dataclass
class OptimResult:
    x: np.ndarray
    fun: float
    n_evals: int
    converged: bool
    message: str


class _Counted:
    """Counts calls and remembers the best point seen."""

    def __init__(self, fun, x0):
        self.fun = fun
        self.n = 0
        self.best_x = np.array(x0, dtype=float)
        self.best_f = np.inf

    def __call__(self, x):
        self.n += 1
        f = float(self.fun(x))
        if not np.isfinite(f):
            return 1e300
        if f < self.best_f:
            self.best_f, self.best_x = f, np.array(x, dtype=float)
        return f


def _lbfgsb(fun, x0, bounds, max_evals):
    return optimize.minimize(
        fun, x0, method="L-BFGS-B", bounds=bounds,
        options={"maxfun": max_evals, "ftol": 1e-15, "gtol": 1e-9, "maxls": 40},
    )


def minimize_bounded(fun, x0, lower, upper=None, max_evals=MAX_EVALS, ftol=FTOL) -> OptimResult:
    """Minimize ``fun`` subject to box bounds from a fixed start.

    L-BFGS-B with finite-difference gradients does the work; it lands
    exactly on active bounds.  Each successful run is followed by a fresh
    restart from the best point, repeated while the objective still drops
    by more than ``ftol``.  If it stops abnormally, a derivative-free
    Powell pass restarts from the best point and L-BFGS-B polishes again.
    Converged means the last polish succeeded, or the restart could not
    improve the objective by more than ``ftol``.
    """
    x0 = np.asarray(x0, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.full_like(x0, np.inf) if upper is None else np.asarray(upper, dtype=float)
    counted = _Counted(fun, x0)
    if x0.size == 0:
        f = counted(x0)
        return OptimResult(x0, f, 1, True, "no parameters")

    bounds = list(zip(np.where(np.isfinite(lower), lower, None), np.where(np.isfinite(upper), upper, None)))
    res = _lbfgsb(counted, x0, bounds, max_evals)
    messages = [f"lbfgsb: {res.message}"]
    converged = bool(res.success)
    # restart with fresh curvature memory until a restart stops paying off
    for _ in range(MAX_RESTARTS):
        if not converged or counted.n >= max_evals:
            break
        before = counted.best_f
        res = _lbfgsb(counted, counted.best_x, bounds, max_evals - counted.n)
        converged = bool(res.success)
        if before - counted.best_f < ftol:
            break
        messages.append(f"restart: {res.message}")
    if not converged and counted.n < max_evals:
        before = counted.best_f
        powell = optimize.minimize(
            counted, counted.best_x, method="Powell", bounds=bounds,
            options={"maxfev": max(max_evals - counted.n, 1), "ftol": ftol, "xtol": 1e-8},
        )
        messages.append(f"powell: {powell.message}")
        if counted.n < max_evals:
            res = _lbfgsb(counted, counted.best_x, bounds, max_evals - counted.n)
            messages.append(f"lbfgsb: {res.message}")
        converged = bool(res.success) or before - counted.best_f < ftol
    converged = converged and counted.n <= max_evals
    return OptimResult(counted.best_x, counted.best_f, counted.n, converged, "; ".join(messages))
