"""BIC, likelihood-ratio tests and sequential comparison of the model ladder."""

from __future__ import annotations

import math
from dataclasses import dataclass

import pandas as pd
from scipy import stats

from . import lmm
from .design import LADDER_NAMES, ladder_spec
from .errors import CriterionMismatch, NotNested, SpeedClimbError

DEFAULT_ALPHA = 0.01


def bic_value(loglik: float, k: int, n: int) -> float:
    return k * math.log(n) - 2.0 * loglik


def bic(fit) -> float:
    """k ln(n) - 2 loglik, with n = observations and k counting sigma^2."""
    return bic_value(fit.loglik, fit.n_params, fit.n_obs)


def chi2_pvalue(statistic: float, df: int) -> float:
    """Upper chi-square tail; statistics at or below zero give 1."""
    if statistic <= 0.0:
        return 1.0
    return float(stats.chi2.sf(statistic, df))


def lrt_values(loglik_simple: float, loglik_complex: float, df: int) -> tuple[float, int, float]:
    statistic = 2.0 * (loglik_complex - loglik_simple)
    return statistic, df, chi2_pvalue(statistic, df)


def lrt(simple_fit, complex_fit) -> tuple[float, int, float]:
    """Likelihood-ratio test of two nested ML fits."""
    for f in (simple_fit, complex_fit):
        if getattr(f, "criterion", "ML") != "ML":
            raise CriterionMismatch("likelihood-ratio tests need ML fits, not REML")
    if simple_fit.n_obs != complex_fit.n_obs:
        raise NotNested("fits use different numbers of observations")
    df = complex_fit.n_params - simple_fit.n_params
    if df <= 0 or not simple_fit.spec.nested_in(complex_fit.spec):
        raise NotNested(f"{simple_fit.spec.name} is not nested in {complex_fit.spec.name}")
    return lrt_values(simple_fit.loglik, complex_fit.loglik, df)


@dataclass
class ComparisonRow:
    model: str
    bic: float
    statistic: float | None
    df: int | None
    p_value: float | None
    loglik: float
    n_params: int
    error: str | None = None


@dataclass
class LadderResult:
    rows: list[ComparisonRow]
    alpha: float
    selected: str | None
    selected_bic: str | None
    fits: dict

    def table(self) -> pd.DataFrame:
        return pd.DataFrame([{
            "Model": r.model, "BIC": r.bic, "Statistic": r.statistic, "df": r.df, "p_value": r.p_value,
        } for r in self.rows])

    def selection_line(self) -> str:
        if self.selected is None:
            return f"selected: none (alpha = {self.alpha:g})"
        return f"selected: {self.selected} (sequential LRT, alpha = {self.alpha:g}; lowest BIC: {self.selected_bic})"


def select_sequential(rows: list[ComparisonRow], alpha: float) -> str | None:
    """Walk up the ladder while each step's LRT is significant at ``alpha``."""
    if not rows or rows[0].error:
        return None
    chosen = rows[0].model
    for r in rows[1:]:
        if r.error or r.p_value is None or not r.p_value < alpha:
            break
        chosen = r.model
    return chosen


def compare_ladder(rows: pd.DataFrame, names=LADDER_NAMES, alpha: float = DEFAULT_ALPHA,
                   fits: dict | None = None) -> LadderResult:
    """Fit each named model by ML and compare adjacent pairs.

    ``fits`` may carry already-computed ML fits keyed by model name.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    fits = dict(fits or {})
    out: list[ComparisonRow] = []
    prev = None
    for name in names:
        spec = ladder_spec(name)
        try:
            f = fits.get(name) or lmm.fit(spec, rows, "ML")
        except SpeedClimbError as exc:
            out.append(ComparisonRow(name, math.nan, None, None, None, math.nan, spec.n_params(),
                                     f"{name}: {type(exc).__name__}: {exc}"))
            prev = None
            continue
        fits[name] = f
        stat = df = p = None
        if prev is not None:
            stat, df, p = lrt(prev, f)
        out.append(ComparisonRow(name, bic(f), stat, df, p, f.loglik, f.n_params))
        prev = f
    ok = [r for r in out if r.error is None]
    best_bic = min(ok, key=lambda r: (r.bic, r.n_params)).model if ok else None
    return LadderResult(out, alpha, select_sequential(out, alpha), best_bic, fits)
