"""Synthetic competitions drawn from the crossed random-effects model.

Every replicate owns a ``numpy.random.Generator`` (PCG64) seeded from
``params.seed``, so outputs are pure functions of the parameters.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from datetime import date, timedelta

import numpy as np
import pandas as pd

from .data import AttemptRecord, ClimberProfile, Dataset, Event, Outcome, RoundKind
from .errors import DegenerateCovariance
from .preprocess import DAYS_PER_YEAR, MODEL_ROW_COLUMNS, forward_fill, standardize

RNG_NAME = "numpy.random.PCG64"
RNG_VERSION = np.__version__
FIXED_NAMES = ("intercept", "x1", "x2", "x3", "x4")


def cov2(var0: float, var1: float, corr: float) -> tuple[tuple[float, float], tuple[float, float]]:
    """2 x 2 covariance matrix from two variances and a correlation."""
    c = corr * math.sqrt(var0 * var1)
    return ((var0, c), (c, var1))


@dataclass(frozen=True)
class SimulationParams:
    gamma: tuple = (2.0, 0.0, 0.0, 0.0, 0.0)  # intercept, x1, x2, x3, x4
    sigma2: float = 0.01
    eta: tuple = ((0.0, 0.0), (0.0, 0.0))  # climber (intercept, skip-slope) covariance
    tau: tuple = ((0.0, 0.0), (0.0, 0.0))  # event (intercept, skip-slope) covariance
    n_climbers: int = 100
    n_events: int = 20
    attendance_prob: float = 0.3
    adoption_prob: float = 0.6  # share of climbers that ever adopt the skip
    gender_split: float = 0.42  # proportion female
    seed: int = 0
    balanced: bool = False  # every climber attends every event
    switch_back_prob: float = 0.0  # adopters who later drop the skip
    first_date: date = date(2012, 3, 1)
    span_days: int = 3650

    def __post_init__(self):
        object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))
        object.__setattr__(self, "eta", tuple(tuple(float(v) for v in r) for r in self.eta))
        object.__setattr__(self, "tau", tuple(tuple(float(v) for v in r) for r in self.tau))
        if len(self.gamma) != 5:
            raise ValueError("gamma needs five entries (intercept, x1, x2, x3, x4)")
        for p in ("attendance_prob", "adoption_prob", "gender_split", "switch_back_prob"):
            if not 0.0 <= getattr(self, p) <= 1.0:
                raise ValueError(f"{p} must lie in [0, 1]")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be non-negative")
        if self.n_climbers < 1 or self.n_events < 1:
            raise ValueError("need at least one climber and one event")

    def with_seed(self, seed: int) -> "SimulationParams":
        return replace(self, seed=seed)

    def truth(self) -> dict:
        """True values keyed like fitted summaries."""
        out = dict(zip(FIXED_NAMES, self.gamma))
        out["sigma2"] = self.sigma2
        for sym, m in (("eta", self.eta), ("tau", self.tau)):
            out[f"{sym}00"], out[f"{sym}11"] = m[0][0], m[1][1]
            denom = math.sqrt(m[0][0] * m[1][1])
            out[f"{sym}01"] = m[0][1] / denom if denom > 0 else 0.0
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["first_date"] = self.first_date.isoformat()
        d["rng"] = {"algorithm": RNG_NAME, "numpy": RNG_VERSION}
        return d


# Published estimates used as generative truth for recovery studies.
PUBLISHED_TRUTH = SimulationParams(
    gamma=(2.0087, -0.1568, 0.2830, -0.0931, 0.0057),
    sigma2=0.0055,
    eta=cov2(0.0736, 0.0286, -0.9808),
    tau=cov2(0.0092, 0.0048, -0.9895),
    n_climbers=400,
    n_events=120,
    attendance_prob=0.3,
)


def _psd_factor(cov, name) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if not np.allclose(cov, cov.T):
        raise DegenerateCovariance(f"{name} covariance is not symmetric")
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() < -1e-12 * max(1.0, abs(vals).max()):
        raise DegenerateCovariance(f"{name} covariance is not positive semidefinite")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


@dataclass
class _Draw:
    params: SimulationParams
    rows: pd.DataFrame
    climbers: list = field(repr=False)
    events: list = field(repr=False)
    observations: dict = field(repr=False)
    linear_predictor: np.ndarray = field(repr=False)
    fixed_predictor: np.ndarray = field(repr=False)
    event_effects: np.ndarray = field(repr=False)  # (n_events, 2) draws from tau
    climber_effects: np.ndarray = field(repr=False)  # (n_climbers, 2) draws from eta
    rng: np.random.Generator = field(repr=False)


def _draw(params: SimulationParams) -> _Draw:
    eta_f = _psd_factor(params.eta, "climber")
    tau_f = _psd_factor(params.tau, "event")
    rng = np.random.default_rng(params.seed)
    nc, ne = params.n_climbers, params.n_events

    events = []
    for i in range(ne):
        d = params.first_date + timedelta(days=int(round(i * params.span_days / max(ne - 1, 1))))
        events.append(Event(f"E{i:04d}", f"Sim event {i}", d, d + timedelta(days=1)))

    female = rng.random(nc) < params.gender_split
    age0 = rng.uniform(16.0, 30.0, nc)
    climbers = []
    for j in range(nc):
        dob = params.first_date - timedelta(days=int(age0[j] * DAYS_PER_YEAR))
        climbers.append(ClimberProfile(f"C{j:05d}", f"Climber {j}", "female" if female[j] else "male", dob, "simulated"))

    adopts = rng.random(nc) < params.adoption_prob
    adopt_at = rng.integers(0, ne, nc)
    drops = rng.random(nc) < params.switch_back_prob
    drop_at = adopt_at + 1 + rng.integers(0, ne, nc)

    if params.balanced:
        attend = np.ones((nc, ne), dtype=bool)
    else:
        attend = rng.random((nc, ne)) < params.attendance_prob

    mu = rng.standard_normal((ne, 2)) @ tau_f.T
    ups = rng.standard_normal((nc, 2)) @ eta_f.T

    observations: dict[tuple[str, str], bool] = {}
    recs = []
    for j in range(nc):
        attended = np.flatnonzero(attend[j])
        if attended.size == 0:
            continue
        ids = [events[i].event_id for i in attended]
        obs = {}
        if adopts[j]:
            after = attended[attended >= adopt_at[j]]
            if after.size:
                obs[events[after[0]].event_id] = True
                if drops[j]:
                    later = attended[attended >= max(drop_at[j], after[0] + 1)]
                    if later.size:
                        obs[events[later[0]].event_id] = False
        for eid, flag in obs.items():
            observations[(climbers[j].climber_id, eid)] = flag
        skip = forward_fill(ids, obs)
        for i in attended:
            e = events[i]
            recs.append((climbers[j].climber_id, e.event_id, j, i, int(skip[e.event_id]), int(female[j]),
                         (e.start_date - climbers[j].dob).days / DAYS_PER_YEAR,
                         (e.start_date - params.first_date).days))
    rows = pd.DataFrame(recs, columns=["climber_id", "event_id", "_j", "_i", "x1", "x2", "x3_raw", "x4_raw"])
    rows = rows.sort_values(["_i", "climber_id"], kind="stable").reset_index(drop=True)
    rows["age_imputed"] = False
    rows, _ = standardize(rows)

    g = params.gamma
    x1 = rows["x1"].to_numpy(float)
    i_idx, j_idx = rows["_i"].to_numpy(), rows["_j"].to_numpy()
    fixed = g[0] + g[1] * x1 + g[2] * rows["x2"].to_numpy(float) + g[3] * rows["x3"].to_numpy() + g[4] * rows["x4"].to_numpy()
    lin = fixed + mu[i_idx, 0] + ups[j_idx, 0] + (mu[i_idx, 1] + ups[j_idx, 1]) * x1
    return _Draw(params, rows, climbers, events, observations, lin, fixed, mu, ups, rng)


def simulate_dataset(params: SimulationParams) -> tuple[pd.DataFrame, SimulationParams]:
    """Gaussian log-time rows in the model_rows schema, plus the truth."""
    draw = _draw(params)
    rows = draw.rows
    noise = math.sqrt(params.sigma2) * draw.rng.standard_normal(len(rows))
    rows["log_y"] = draw.linear_predictor + noise
    rows["y"] = np.exp(rows["log_y"])
    return rows[MODEL_ROW_COLUMNS].copy(), params


def simulate_binary(params: SimulationParams) -> pd.DataFrame:
    """Bernoulli fall outcomes with logit-linear probabilities (sigma2 unused)."""
    draw = _draw(params)
    rows = draw.rows
    prob = 1.0 / (1.0 + np.exp(-draw.linear_predictor))
    rows["fell"] = (draw.rng.random(len(rows)) < prob).astype(int)
    cols = ["climber_id", "event_id", "fell", "x1", "x2", "x3_raw", "x4_raw", "x3", "x4", "age_imputed"]
    return rows[cols].copy()


def _to_dataset(draw: _Draw, outcomes: list[AttemptRecord]) -> Dataset:
    return Dataset(draw.climbers, draw.events, outcomes, draw.observations)


def simulate_records(params: SimulationParams) -> Dataset:
    """The Gaussian simulation as raw records (one qualification time each)."""
    draw = _draw(params)
    noise = math.sqrt(params.sigma2) * draw.rng.standard_normal(len(draw.rows))
    times = np.exp(draw.linear_predictor + noise)
    attempts = [AttemptRecord.time(e, c, RoundKind.QUALIFICATION, t)
                for c, e, t in zip(draw.rows["climber_id"], draw.rows["event_id"], times)]
    climbers_seen = set(draw.rows["climber_id"])
    draw.climbers = [c for c in draw.climbers if c.climber_id in climbers_seen]
    events_seen = set(draw.rows["event_id"])
    draw.events = [e for e in draw.events if e.event_id in events_seen]
    return _to_dataset(draw, attempts)


def simulate_binary_records(params: SimulationParams) -> Dataset:
    """The Bernoulli simulation as records: one qualification attempt, a FALL or a time."""
    draw = _draw(params)
    rows = draw.rows
    prob = 1.0 / (1.0 + np.exp(-draw.linear_predictor))
    fell = draw.rng.random(len(rows)) < prob
    attempts = []
    for c, e, f, lp in zip(rows["climber_id"], rows["event_id"], fell, draw.fixed_predictor):
        if f:
            attempts.append(AttemptRecord(e, c, RoundKind.QUALIFICATION, Outcome.FALL))
        else:
            attempts.append(AttemptRecord.time(e, c, RoundKind.QUALIFICATION, 7.0))
    draw.climbers = [c for c in draw.climbers if c.climber_id in set(rows["climber_id"])]
    draw.events = [e for e in draw.events if e.event_id in set(rows["event_id"])]
    return _to_dataset(draw, attempts)


# --- recovery harness -----------------------------------------------------

@dataclass
class RecoveryReport:
    params: SimulationParams
    n_replicates: int
    estimates: pd.DataFrame  # one row per successful replicate
    coverage_hits: pd.DataFrame
    failures: list
    summary: pd.DataFrame  # per parameter: truth, mean, bias, rmse, mc_se, coverage

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "n_replicates": self.n_replicates,
            "n_failed": len(self.failures),
            "failures": [{"replicate": r, "error": m} for r, m in self.failures],
            "summary": self.summary.reset_index().to_dict(orient="records"),
        }


def recovery_report(params: SimulationParams, n_replicates: int, model: str = "M3",
                    criterion: str = "ML", family: str = "gaussian", level: float = 0.95) -> RecoveryReport:
    """Fit ``n_replicates`` simulated datasets and summarize estimation error.

    Replicate ``r`` uses seed ``params.seed + r``.  Fit failures are recorded
    and skipped.
    """
    from . import glmm, lmm
    from .design import falls_spec, ladder_spec

    if n_replicates < 2:
        raise ValueError("need at least two replicates")
    truth = params.truth()
    estimates, hits, failures = [], [], []
    for r in range(n_replicates):
        p = params.with_seed(params.seed + r)
        try:
            if family == "gaussian":
                spec = ladder_spec(model)
                rows, _ = simulate_dataset(p)
                fit = lmm.fit(spec, rows, criterion)
                est = dict(fit.gamma)
                est.update(fit.table3())
            else:
                spec = falls_spec()
                rows = simulate_binary(p)
                fit = glmm.fit_binomial(spec, rows)
                est = dict(fit.gamma)
                est.update(fit.table3())
            ci = lmm.wald_ci(fit, level)
        except Exception as exc:  # a failed replicate is data, not a reason to stop
            failures.append((r, f"{type(exc).__name__}: {exc}"))
            continue
        estimates.append({"replicate": r, **est})
        hits.append({"replicate": r, **{t: bool(ci.loc[t, "lower"] <= truth[t] <= ci.loc[t, "upper"])
                                        for t in ci.index if t in truth}})

    est_df = pd.DataFrame(estimates)
    hit_df = pd.DataFrame(hits)
    recs = []
    for name in [c for c in est_df.columns if c != "replicate" and c in truth]:
        vals = est_df[name].to_numpy(float)
        vals = vals[np.isfinite(vals)]
        t = truth[name]
        recs.append({
            "parameter": name,
            "truth": t,
            "mean": vals.mean() if vals.size else np.nan,
            "bias": vals.mean() - t if vals.size else np.nan,
            "rmse": math.sqrt(np.mean((vals - t) ** 2)) if vals.size else np.nan,
            "mc_se": vals.std(ddof=1) / math.sqrt(vals.size) if vals.size > 1 else np.nan,
            "coverage": float(hit_df[name].mean()) if name in hit_df else np.nan,
            "n": int(vals.size),
        })
    summary = pd.DataFrame(recs).set_index("parameter") if recs else pd.DataFrame()
    return RecoveryReport(params, n_replicates, est_df, hit_df, failures, summary)
