"""Data builders shared by the model test modules."""

import numpy as np
import pandas as pd

from speedclimb.design import ModelSpec, RandomTerm
from speedclimb.simulate import SimulationParams, cov2, simulate_dataset

ONEWAY = ModelSpec("oneway", ("intercept",), (RandomTerm("climber"),))

# small crossed scenario with moderate variances, used by the cheaper model tests
SMALL = SimulationParams(gamma=(2.0, -0.15, 0.28, -0.09, 0.01), sigma2=0.01,
                         eta=cov2(0.05, 0.02, -0.5), tau=cov2(0.01, 0.005, 0.3),
                         n_climbers=40, n_events=10, attendance_prob=0.5)


def crossed(seed=0, params=SMALL):
    return simulate_dataset(params.with_seed(seed))[0]


def balanced_oneway(a=50, n=10, sigma2=1.0, tau=0.5, mu=3.0, seed=0):
    rng = np.random.default_rng(seed)
    effects = rng.normal(0, np.sqrt(tau), a)
    y = mu + np.repeat(effects, n) + rng.normal(0, np.sqrt(sigma2), a * n)
    return pd.DataFrame({"climber_id": np.repeat([f"G{g:03d}" for g in range(a)], n), "log_y": y})


def oneway_anova(rows, a, n):
    """Closed-form ML and REML estimates for a balanced one-way layout."""
    y = rows["log_y"].to_numpy().reshape(a, n)
    means = y.mean(axis=1)
    ssw = ((y - means[:, None]) ** 2).sum()
    ssb = n * ((means - y.mean()) ** 2).sum()
    msw = ssw / (a * (n - 1))
    msb = ssb / (a - 1)
    return {
        "sigma2": msw,
        "tau_reml": (msb - msw) / n,
        "tau_ml": (ssb / a - msw) / n,
        "ssw": ssw, "ssb": ssb,
    }


def oneway_ml_deviance(stats, a, n, sigma2, tau):
    N = a * n
    lam = sigma2 + n * tau
    return (N * np.log(2 * np.pi) + a * (n - 1) * np.log(sigma2) + a * np.log(lam)
            + stats["ssw"] / sigma2 + stats["ssb"] / lam)


def ols(X, y):
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ beta
    n = len(y)
    loglik = -0.5 * n * (np.log(2 * np.pi * (r @ r) / n) + 1)
    return beta, r, loglik


def double_centred_rows(n_climbers=20, n_events=12, seed=0):
    """Fully crossed data whose noise sums to zero within every climber and
    every event, so both variance components sit exactly on zero."""
    rng = np.random.default_rng(seed)
    e = rng.normal(0, 0.1, (n_climbers, n_events))
    e = e - e.mean(axis=1, keepdims=True) - e.mean(axis=0, keepdims=True) + e.mean()
    x2 = (np.arange(n_climbers) % 2).astype(float)
    y = 2.0 + 0.3 * x2[:, None] + e
    return pd.DataFrame({
        "climber_id": np.repeat([f"C{c:02d}" for c in range(n_climbers)], n_events),
        "event_id": np.tile([f"E{v:02d}" for v in range(n_events)], n_climbers),
        "x2": np.repeat(x2, n_events),
        "log_y": y.ravel(),
    })
