"""Gaussian linear mixed models with crossed random effects.

Fixed effects and the residual variance are profiled out of the
likelihood; what is left is a function of the relative covariance factors
``theta`` only, minimized with a bounded optimizer from the identity start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import stats

from .design import DesignMatrices, ModelSpec, build_design, canonical_order
from .errors import ConvergenceFailure, EmptyData, SingularSystem, UnknownLevel
from .optim import OptimResult, minimize_bounded
from .pls import PenalizedSystem, Solution

CRITERIA = ("ML", "REML")

# display symbols: the event block is (mu0, mu1) ~ MVN(0, tau), the climber block (upsilon0, upsilon1) ~ MVN(0, eta)
COV_SYMBOL = {"event": "tau", "climber": "eta"}
BLUP_SYMBOL = {"event": "mu", "climber": "upsilon"}


def _check_criterion(criterion: str) -> str:
    c = criterion.upper()
    if c not in CRITERIA:
        raise ValueError(f"criterion must be ML or REML, got {criterion!r}")
    return c


def deviance_of(sol: Solution, n: int, p: int, criterion: str) -> float:
    """-2 log-likelihood (ML) or the REML criterion at a PLS solution."""
    if sol.pwrss <= 0.0:
        return -math.inf  # noise-free response: the likelihood is unbounded
    if criterion == "ML":
        return sol.logdet_A + n * (1.0 + math.log(2.0 * math.pi * sol.pwrss / n))
    nmp = n - p
    return sol.logdet_A + sol.logdet_RX + nmp * (1.0 + math.log(2.0 * math.pi * sol.pwrss / nmp))


class LMMProblem:
    """Pre-computed cross-products for repeated deviance evaluations."""

    def __init__(self, design: DesignMatrices, response=None):
        y = design.y if response is None else np.asarray(response, dtype=float)
        if y is None:
            raise ValueError("design has no response")
        self.design = design
        self.y = y
        self.system = PenalizedSystem(design.blocks, design.Z, design.X, y)
        self.layout = self.system.layout

    def solve(self, theta) -> Solution:
        return self.system.solve(theta)

    def deviance(self, theta, criterion="ML") -> float:
        criterion = _check_criterion(criterion)
        return deviance_of(self.solve(theta), self.design.n, self.design.p, criterion)


def profiled_deviance(theta, design: DesignMatrices, response=None, criterion="ML") -> float:
    return LMMProblem(design, response).deviance(theta, criterion)


@dataclass
class FittedLMM:
    spec: ModelSpec
    criterion: str
    gamma: pd.Series
    se: pd.Series
    vcov: pd.DataFrame
    sigma2: float
    theta: np.ndarray
    var_components: dict
    blups: dict
    loglik: float
    deviance: float
    n_obs: int
    n_params: int
    converged: bool
    boundary: bool
    n_evals: int
    fitted: np.ndarray = field(repr=False)
    residuals: np.ndarray = field(repr=False)
    scaling: object = None
    message: str = ""
    family: str = "gaussian"

    def table3(self) -> dict:
        """Flat estimates keyed like the published summary (sigma2, eta00, tau01, ...)."""
        out = {"sigma2": self.sigma2}
        for grouping, vc in self.var_components.items():
            sym = COV_SYMBOL[grouping]
            for i, name in enumerate(vc["coef_names"]):
                out[f"{sym}{i}{i}"] = vc["variances"][name]
            if vc["correlation"] is not None:
                out[f"{sym}01"] = vc["correlation"]
        return out


def _var_components(system: PenalizedSystem, theta, sigma2) -> dict:
    out = {}
    for blk, T in zip(system.blocks, system.layout.factors(theta)):
        cov = sigma2 * (T @ T.T)
        names = blk.term.coef_names
        corr = None
        if len(names) == 2:
            denom = math.sqrt(cov[0, 0] * cov[1, 1])
            corr = float(np.clip(cov[0, 1] / denom, -1.0, 1.0)) if denom > 0 else float("nan")
        out[blk.term.grouping] = {
            "coef_names": list(names),
            "variances": {n: float(cov[i, i]) for i, n in enumerate(names)},
            "covariance": float(cov[0, 1]) if len(names) == 2 else None,
            "correlation": corr,
            "matrix": cov,
        }
    return out


def _blups(system: PenalizedSystem, b: np.ndarray) -> dict:
    out = {}
    for blk in system.blocks:
        vals = b[blk.offset:blk.offset + blk.q].reshape(blk.n_levels, blk.n_coef)
        sym = BLUP_SYMBOL[blk.term.grouping]
        cols = {f"{sym}{i}": vals[:, i] for i in range(blk.n_coef)}
        out[blk.term.grouping] = pd.DataFrame(cols, index=pd.Index(blk.levels, name=blk.term.grouping))
    return out


def _exact_fit(sol: Solution, y: np.ndarray) -> bool:
    """True when the fixed effects alone leave no residual at rounding level."""
    return sol.wrss <= 1e-24 * max(1.0, float(y @ y))


def _unsort(values: np.ndarray, order: np.ndarray) -> np.ndarray:
    out = np.empty_like(values)
    out[order] = values
    return out


def fit(spec: ModelSpec, rows: pd.DataFrame, criterion: str = "ML", *, theta=None, scaling=None,
        raise_on_failure: bool = True, max_evals: int = 2000) -> FittedLMM:
    """Fit a Gaussian mixed model by ML or REML.

    ``theta`` pins the relative covariance factors instead of estimating
    them; all zeros reduces the fit to ordinary least squares.
    """
    criterion = _check_criterion(criterion)
    if spec.family != "gaussian":
        raise ValueError(f"lmm.fit needs a gaussian spec, got {spec.family}")
    order = canonical_order(spec, rows)
    design = build_design(spec, rows.iloc[order])
    if design.n < design.p + 1:
        raise EmptyData(f"need at least {design.p + 1} rows, got {design.n}")
    problem = LMMProblem(design)
    layout = problem.layout

    def objective(th):
        # far from the optimum the system can lose definiteness numerically;
        # treat that as infeasible so the line search backs off
        try:
            return problem.deviance(th, criterion)
        except SingularSystem:
            return math.inf

    zeros = np.zeros(layout.size)
    if theta is None and _exact_fit(problem.solve(zeros), problem.y):
        res = OptimResult(zeros, objective(zeros), 1, True, "response reproduced exactly by the fixed effects")
    elif theta is None:
        res = minimize_bounded(objective, layout.start(), layout.lower_bounds(), max_evals=max_evals)
    else:
        pinned = np.asarray(theta, dtype=float)
        res = OptimResult(pinned, problem.deviance(pinned, criterion), 1, True, "theta fixed")
    theta = res.x
    sol = problem.solve(theta)
    dev = deviance_of(sol, design.n, design.p, criterion)
    denom = design.n if criterion == "ML" else design.n - design.p
    sigma2 = sol.pwrss / denom

    names = list(spec.fixed_terms)
    vcov = sigma2 * np.linalg.inv(sol.RXtRX)
    vcov = 0.5 * (vcov + vcov.T)
    fitted = FittedLMM(
        spec=spec,
        criterion=criterion,
        gamma=pd.Series(sol.beta, index=names, name="estimate"),
        se=pd.Series(np.sqrt(np.diag(vcov)), index=names, name="se"),
        vcov=pd.DataFrame(vcov, index=names, columns=names),
        sigma2=float(sigma2),
        theta=theta,
        var_components=_var_components(problem.system, theta, sigma2),
        blups=_blups(problem.system, sol.b),
        loglik=-0.5 * dev,
        deviance=dev,
        n_obs=design.n,
        n_params=spec.n_params(),
        converged=res.converged,
        boundary=bool(np.any(theta[layout.diagonal_mask()] <= 1e-8)),
        n_evals=res.n_evals,
        fitted=_unsort(sol.fitted, order),
        residuals=_unsort(problem.y - sol.fitted, order),
        scaling=scaling,
        message=res.message,
    )
    if not res.converged and raise_on_failure:
        raise ConvergenceFailure(f"{spec.name}: optimizer did not converge ({res.message})", best=fitted)
    return fitted


def wald_ci(fit, level: float = 0.95) -> pd.DataFrame:
    """estimate +/- z * se for every fixed effect."""
    z = stats.norm.ppf(0.5 + level / 2.0)
    return pd.DataFrame({
        "estimate": fit.gamma,
        "lower": fit.gamma - z * fit.se,
        "upper": fit.gamma + z * fit.se,
    })


def effect_multiplier(fit, term: str, level: float = 0.95) -> tuple[float, float, float]:
    """Multiplicative effect on the untransformed response for a log-scale coefficient."""
    ci = wald_ci(fit, level).loc[term]
    return math.exp(ci["estimate"]), math.exp(ci["lower"]), math.exp(ci["upper"])


def compose_coefficients(fit: FittedLMM, climber_id, event_id) -> tuple[float, float]:
    """Level-specific intercept and skip slope for one climber at one event."""
    beta0 = float(fit.gamma.get("intercept", 0.0))
    beta1 = float(fit.gamma.get("x1", 0.0))
    for grouping, level in (("event", event_id), ("climber", climber_id)):
        table = fit.blups.get(grouping)
        if table is None:
            continue
        if str(level) not in table.index:
            raise UnknownLevel(f"unknown {grouping} {level!r}")
        row = table.loc[str(level)]
        sym = BLUP_SYMBOL[grouping]
        names = fit.var_components[grouping]["coef_names"]
        for i, name in enumerate(names):
            if name == "intercept":
                beta0 += float(row[f"{sym}{i}"])
            elif name == "x1":
                beta1 += float(row[f"{sym}{i}"])
    return beta0, beta1
