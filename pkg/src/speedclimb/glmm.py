"""Bernoulli-logit mixed models fitted by the Laplace approximation.

For fixed covariance factors the conditional mode of the spherical random
effects is found by penalized iteratively reweighted least squares
(PIRLS).  The Laplace deviance at the mode is

    sum of Bernoulli deviance residuals + |u|^2 + log det(L'Z'WZL + I)

Fitting runs in two stages: first theta is optimized with the fixed
effects carried inside PIRLS (joint conditional mode), then theta and the
fixed effects are optimized together on the Laplace deviance with PIRLS
over u only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import special, stats

from .design import DesignMatrices, ModelSpec, build_design, canonical_order
from .errors import CompleteSeparation, ConvergenceFailure, SingularSystem
from .lmm import COV_SYMBOL, _blups, _unsort, _var_components
from .optim import minimize_bounded
from .pls import PenalizedSystem, Solution

SEPARATION_BOUND = 15.0
PIRLS_MAX_ITER = 60
PIRLS_TOL = 1e-12


def expit(eta):
    return special.expit(eta)


def logit(mu):
    return special.logit(mu)


def bernoulli_deviance(y, eta) -> float:
    """-2 log-likelihood of 0/1 outcomes under logit-linear predictor ``eta``."""
    # log(1 + e^eta) - y * eta, summed
    return 2.0 * float(np.sum(np.logaddexp(0.0, eta) - y * eta))


def _weights(eta):
    mu = expit(eta)
    return mu, np.clip(mu * (1.0 - mu), 1e-12, None)


@dataclass
class Mode:
    beta: np.ndarray
    u: np.ndarray
    eta: np.ndarray
    solution: Solution = field(repr=False)
    deviance: float  # Laplace deviance
    iterations: int


class BinomialProblem:
    def __init__(self, design: DesignMatrices, response=None):
        y = design.y if response is None else np.asarray(response, dtype=float)
        if y is None:
            raise ValueError("design has no response")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("binomial outcomes must be 0 or 1")
        self.design = design
        self.y = y
        self.layout = PenalizedSystem(design.blocks, design.Z, design.X[:, :0], y).layout
        self._u_start = np.zeros(design.q)
        self._beta_start = None

    def _system(self, eta, X, offset):
        mu, w = _weights(eta)
        z = eta - offset + (self.y - mu) / w
        return PenalizedSystem(self.design.blocks, self.design.Z, X, z, w)

    def _check_beta(self, beta):
        if beta.size and np.max(np.abs(beta)) > SEPARATION_BOUND:
            raise CompleteSeparation(
                f"fixed effects diverge beyond +/-{SEPARATION_BOUND:g} on the logit scale "
                f"(max |estimate| {np.max(np.abs(beta)):.1f})"
            )

    def pirls(self, theta, beta=None) -> Mode:
        """Conditional mode at ``theta``; jointly over (u, beta) when beta is None.

        Warm-starts from the previous mode; Newton steps are halved whenever
        the penalized deviance would increase.
        """
        d = self.design
        joint = beta is None
        X = d.X if joint else d.X[:, :0]
        offset = np.zeros(d.n) if joint else d.X @ beta
        factors = self.layout.factors(theta)

        def pdev(eta_, u_):
            return bernoulli_deviance(self.y, eta_) + float(u_ @ u_)

        u = self._u_start.copy()
        cur = self._beta_start if joint else beta
        if joint and cur is None:
            eta = logit((self.y + 0.5) / 2.0)
            old = np.inf
        else:
            eta = (d.X @ cur if joint else offset) + d.Z @ self._lambda(u, factors)
            old = pdev(eta, u)

        for it in range(1, PIRLS_MAX_ITER + 1):
            sol = self._system(eta, X, offset).solve(theta)
            step = 1.0
            while True:
                new_u = u + step * (sol.u - u) if np.isfinite(old) else sol.u
                new_beta = (cur + step * (sol.beta - cur) if np.isfinite(old) else sol.beta) if joint else beta
                new_eta = (d.X @ new_beta if joint else offset) + d.Z @ self._lambda(new_u, factors)
                new = pdev(new_eta, new_u)
                if new <= old + 1e-10 * abs(new) or step < 1e-4:
                    break
                step /= 2.0
            if joint:
                self._check_beta(new_beta)
            done = np.isfinite(old) and abs(old - new) <= PIRLS_TOL * (abs(new) + 1.0)
            u, cur, eta, old = new_u, new_beta, new_eta, new
            if done:
                break
        else:
            raise ConvergenceFailure("PIRLS did not converge")

        # curvature and log-determinant at the mode itself
        final = self._system(eta, d.X, np.zeros(d.n)).solve(theta)
        dev = bernoulli_deviance(self.y, eta) + float(u @ u) + final.logdet_A
        self._u_start = u
        if joint:
            self._beta_start = cur
        return Mode(np.asarray(cur, dtype=float), u, eta, final, dev, it)

    def _lambda(self, u, factors):
        b = np.empty_like(u)
        for blk, T in zip(self.design.blocks, factors):
            sl = slice(blk.offset, blk.offset + blk.q)
            b[sl] = (u[sl].reshape(blk.n_levels, blk.n_coef) @ T.T).ravel()
        return b

    def laplace_deviance(self, theta, beta=None) -> float:
        return self.pirls(theta, beta).deviance


@dataclass
class FittedGLMM:
    spec: ModelSpec
    gamma: pd.Series
    se: pd.Series
    vcov: pd.DataFrame
    theta: np.ndarray
    var_components: dict
    blups: dict
    approx_loglik: float
    deviance: float
    n_obs: int
    n_params: int
    converged: bool
    boundary: bool
    n_evals: int
    fitted_prob: np.ndarray = field(repr=False)
    scaling: object = None
    message: str = ""
    family: str = "binomial_logit"
    link: str = "logit"
    criterion: str = "ML"

    @property
    def loglik(self) -> float:
        return self.approx_loglik

    def table3(self) -> dict:
        out = {}
        for grouping, vc in self.var_components.items():
            sym = COV_SYMBOL[grouping]
            for i, name in enumerate(vc["coef_names"]):
                out[f"{sym}{i}{i}"] = vc["variances"][name]
            if vc["correlation"] is not None:
                out[f"{sym}01"] = vc["correlation"]
        return out


def fit_binomial(spec: ModelSpec, rows: pd.DataFrame, *, theta=None, scaling=None,
                 raise_on_failure: bool = True, max_evals: int = 2000) -> FittedGLMM:
    """Laplace-approximate ML fit of a Bernoulli-logit mixed model.

    ``theta`` fixes the relative covariance factors instead of estimating
    them (zeros give ordinary logistic regression).
    """
    if spec.family != "binomial_logit":
        raise ValueError(f"fit_binomial needs a binomial_logit spec, got {spec.family}")
    order = canonical_order(spec, rows)
    design = build_design(spec, rows.iloc[order])
    problem = BinomialProblem(design)
    layout = problem.layout
    p = design.p
    n_evals = 0
    messages = []
    converged = True

    def guarded(fun, *args):
        # extreme trial points can diverge or lose definiteness; the final
        # estimate is still checked for separation below
        try:
            return fun(*args)
        except (SingularSystem, ConvergenceFailure, CompleteSeparation):
            return math.inf

    if theta is None:
        stage1 = minimize_bounded(lambda th: guarded(problem.laplace_deviance, th), layout.start(),
                                  layout.lower_bounds(), max_evals=max_evals)
        theta1 = stage1.x
        n_evals += stage1.n_evals
        messages.append(f"stage1 {stage1.message}")
        converged &= stage1.converged
    else:
        theta1 = np.asarray(theta, dtype=float)
    beta1 = problem.pirls(theta1).beta

    free_theta = theta is None
    m = layout.size if free_theta else 0

    def objective(x):
        th = x[:m] if free_theta else theta1
        return guarded(problem.laplace_deviance, th, x[m:])

    x0 = np.concatenate([theta1 if free_theta else np.zeros(0), beta1])
    lower = np.concatenate([layout.lower_bounds() if free_theta else np.zeros(0), np.full(p, -np.inf)])
    stage2 = minimize_bounded(objective, x0, lower, max_evals=max_evals)
    n_evals += stage2.n_evals
    messages.append(f"stage2 {stage2.message}")
    converged &= stage2.converged
    theta_hat = stage2.x[:m] if free_theta else theta1
    beta_hat = stage2.x[m:]
    problem._check_beta(beta_hat)

    mode = problem.pirls(theta_hat, beta_hat)
    names = list(spec.fixed_terms)
    try:
        vcov = np.linalg.inv(mode.solution.RXtRX)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"singular information matrix: {exc}") from None
    vcov = 0.5 * (vcov + vcov.T)
    system = PenalizedSystem(design.blocks, design.Z, design.X[:, :0], design.y)
    b = system.lambda_times(mode.u, layout.factors(theta_hat))
    fitted = FittedGLMM(
        spec=spec,
        gamma=pd.Series(beta_hat, index=names, name="estimate"),
        se=pd.Series(np.sqrt(np.clip(np.diag(vcov), 0.0, None)), index=names, name="se"),
        vcov=pd.DataFrame(vcov, index=names, columns=names),
        theta=theta_hat,
        var_components=_var_components(system, theta_hat, 1.0),
        blups=_blups(system, b),
        approx_loglik=-0.5 * mode.deviance,
        deviance=mode.deviance,
        n_obs=design.n,
        n_params=spec.n_params(),
        converged=bool(converged),
        boundary=bool(layout.size and np.any(theta_hat[layout.diagonal_mask()] <= 1e-8)),
        n_evals=n_evals,
        fitted_prob=_unsort(expit(mode.eta), order),
        scaling=scaling,
        message="; ".join(messages),
    )
    if not converged and raise_on_failure:
        raise ConvergenceFailure(f"{spec.name}: optimizer did not converge", best=fitted)
    return fitted


def wald_test(fit, term: str) -> tuple[float, float]:
    """z statistic and two-sided normal p-value for one fixed effect."""
    est = float(fit.gamma[term])
    se = float(fit.se[term])
    if est == 0.0:
        return 0.0, 1.0
    z = est / se
    return z, float(2.0 * stats.norm.sf(abs(z)))


def logistic_regression(X, y, tol=1e-12, max_iter=100) -> np.ndarray:
    """Plain logistic regression by IRLS (no random effects)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    beta = np.zeros(X.shape[1])
    for _ in range(max_iter):
        eta = X @ beta
        mu, w = _weights(eta)
        step = np.linalg.solve(X.T @ (X * w[:, None]), X.T @ (y - mu))
        beta = beta + step
        if np.max(np.abs(step)) < tol:
            break
        if np.max(np.abs(beta)) > SEPARATION_BOUND:
            raise CompleteSeparation("logistic regression diverges")
    return beta
