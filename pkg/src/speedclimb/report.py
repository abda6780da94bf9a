"""JSON and text summaries of fits, ladders and descriptive tables.

Values are kept at full precision in JSON; text tables and CSV exports
round at write time (4 decimals for estimates, 2 for rates).
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import pandas as pd

from .glmm import FittedGLMM, wald_test
from .lmm import effect_multiplier, wald_ci
from .preprocess import GENDER_CODING, DisciplineStats
from .selection import LadderResult, bic

SYMBOLS = {"intercept": "gamma00", "x1": "gamma01", "x2": "gamma02", "x3": "gamma03", "x4": "gamma04",
           "x1:x3": "gamma05"}
TERM_LABELS = {"intercept": "Intercept", "x1": "Tomoa Skip", "x2": "Gender (female)", "x3": "Age",
               "x4": "Time progression", "x1:x3": "Skip x Age"}
RANDOM_ORDER = ("sigma2", "eta00", "tau00", "eta11", "tau11", "eta01", "tau01")


def _clean(obj):
    """Make ``obj`` JSON-safe: numpy scalars to Python, NaN/inf to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def fit_summary(fit, level: float = 0.95) -> dict:
    """Fixed effects with CIs, variance components and diagnostics."""
    ci = wald_ci(fit, level)
    fixed = []
    for term, row in ci.iterrows():
        fixed.append({
            "term": term, "symbol": SYMBOLS.get(term, term), "estimate": row["estimate"],
            "se": fit.se[term], "ci_lower": row["lower"], "ci_upper": row["upper"],
        })
    random = fit.table3()
    covariances = {
        g: {"coef_names": vc["coef_names"], "variances": vc["variances"],
            "covariance": vc["covariance"], "correlation": vc["correlation"]}
        for g, vc in fit.var_components.items()
    }
    out = {
        "model": fit.spec.name,
        "formula": fit.spec.formula(),
        "family": fit.family,
        "link": getattr(fit, "link", "identity"),
        "criterion": fit.criterion,
        "n_obs": fit.n_obs,
        "fixed_effects": fixed,
        "random_effects": {k: random[k] for k in RANDOM_ORDER if k in random},
        "covariances": covariances,
        "loglik": fit.loglik,
        "deviance": fit.deviance,
        "bic": bic(fit),
        "n_params": fit.n_params,
        "convergence": {
            "converged": fit.converged, "boundary": fit.boundary, "n_evals": fit.n_evals,
            "theta": fit.theta, "message": fit.message,
        },
        "coding": {"x2": GENDER_CODING},
        "scaling": fit.scaling.to_dict() if fit.scaling is not None else None,
    }
    if fit.family == "gaussian" and fit.spec.response == "log_y":
        out["effect_multipliers"] = []
        for term in fit.spec.fixed_terms[1:]:
            point, lo, hi = effect_multiplier(fit, term, level)
            out["effect_multipliers"].append({"term": term, "multiplier": point, "ci_lower": lo, "ci_upper": hi})
    if isinstance(fit, FittedGLMM):
        out["wald_tests"] = []
        for term in fit.spec.fixed_terms[1:]:
            z, p = wald_test(fit, term)
            out["wald_tests"].append({"term": term, "z": z, "p_value": p})
    return out


def fit_text(summary: dict) -> str:
    lines = [f"{summary['model']}: {summary['formula']}",
             f"family {summary['family']} ({summary['link']}), {summary['criterion']}, n = {summary['n_obs']}", ""]
    lines.append(f"{'Term':<22}{'Estimate':>10}  95% CI")
    lines.append("Fixed Effects")
    for fe in summary["fixed_effects"]:
        lines.append(f"  {fe['symbol']:<20}{fe['estimate']:>10.4f}  ({fe['ci_lower']:.4f}, {fe['ci_upper']:.4f})")
    lines.append("Random Effects")
    for k, v in summary["random_effects"].items():
        lines.append(f"  {k:<20}{v:>10.4f}" if v is not None else f"  {k:<20}{'NA':>10}")
    if "effect_multipliers" in summary:
        lines.append("")
        lines.append("Multiplicative effects on best time")
        for m in summary["effect_multipliers"]:
            lines.append(f"  {m['term']:<20}{m['multiplier']:>10.4f}  ({m['ci_lower']:.4f}, {m['ci_upper']:.4f})")
    if "wald_tests" in summary:
        lines.append("")
        for w in summary["wald_tests"]:
            lines.append(f"  wald {w['term']:<15} z = {w['z']:.4f}, p = {w['p_value']:.4f}")
    c = summary["convergence"]
    lines.append("")
    lines.append(f"loglik {summary['loglik']:.4f}  BIC {summary['bic']:.4f}  converged {c['converged']}"
                 f"  boundary {c['boundary']}  evaluations {c['n_evals']}")
    return "\n".join(lines) + "\n"


def ladder_frame(result: LadderResult) -> pd.DataFrame:
    t = result.table()
    for col in ("BIC", "Statistic", "p_value"):
        t[col] = pd.Series([None if pd.isna(v) else round(float(v), 4) for v in t[col]], dtype=object)
    t["df"] = pd.Series([None if pd.isna(v) else int(v) for v in t["df"]], dtype=object)
    return t


def ladder_text(result: LadderResult) -> str:
    lines = [f"{'Model':<8}{'BIC':>14}{'Statistic':>14}{'df':>5}{'p-value':>10}"]
    for r in result.rows:
        if r.error:
            lines.append(f"{r.model:<8}  failed: {r.error}")
            continue
        stat = "NA" if r.statistic is None else f"{r.statistic:.4f}"
        df = "NA" if r.df is None else str(r.df)
        p = "NA" if r.p_value is None else f"{r.p_value:.4f}"
        lines.append(f"{r.model:<8}{r.bic:>14.3f}{stat:>14}{df:>5}{p:>10}")
    lines.append(result.selection_line())
    return "\n".join(lines) + "\n"


def discipline_frame(stats: list[DisciplineStats]) -> pd.DataFrame:
    labels = {"female": "Women", "male": "Men"}
    return pd.DataFrame([{
        "Category": labels.get(s.category, s.category),
        "Events": s.events,
        "Falls": s.falls,
        "FalseStarts": s.false_starts,
        "FallRate": f"{s.fall_rate:.2f}",
        "FalseStartRate": f"{s.false_start_rate:.2f}",
    } for s in stats])
