"""Model specifications for the M0-M4 ladder and their design matrices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.sparse as sps

from .errors import EmptyData, UnknownModelName

FIXED_TERMS = ("intercept", "x1", "x2", "x3", "x4", "x1:x3")
GROUPINGS = ("climber", "event")
FAMILIES = ("gaussian", "binomial_logit")

# column of the model frame that identifies each grouping level
GROUP_COLUMNS = {"climber": "climber_id", "event": "event_id"}


@dataclass(frozen=True)
class RandomTerm:
    grouping: str
    has_intercept: bool = True
    slope: str | None = None

    def __post_init__(self):
        if self.grouping not in GROUPINGS:
            raise ValueError(f"unknown grouping {self.grouping!r}")
        if self.slope not in (None, "x1"):
            raise ValueError(f"unsupported random slope {self.slope!r}")
        if not self.has_intercept and self.slope is None:
            raise ValueError("random term needs an intercept or a slope")

    @property
    def coef_names(self) -> tuple[str, ...]:
        names = ("intercept",) if self.has_intercept else ()
        return names + ((self.slope,) if self.slope else ())

    @property
    def n_coef(self) -> int:
        return len(self.coef_names)

    @property
    def n_cov_params(self) -> int:
        k = self.n_coef
        return k * (k + 1) // 2

    def formula(self) -> str:
        lhs = " + ".join("1" if c == "intercept" else c for c in self.coef_names)
        if not self.has_intercept:
            lhs = "0 + " + lhs
        return f"({lhs} | {self.grouping})"

    def contains(self, other: "RandomTerm") -> bool:
        return self.grouping == other.grouping and set(other.coef_names) <= set(self.coef_names)


@dataclass(frozen=True)
class ModelSpec:
    name: str
    fixed_terms: tuple[str, ...]
    random_terms: tuple[RandomTerm, ...] = ()
    family: str = "gaussian"
    response: str = "log_y"

    def __post_init__(self):
        object.__setattr__(self, "fixed_terms", tuple(self.fixed_terms))
        object.__setattr__(self, "random_terms", tuple(self.random_terms))
        if not self.fixed_terms or self.fixed_terms[0] != "intercept":
            raise ValueError("fixed terms must start with the intercept")
        unknown = set(self.fixed_terms) - set(FIXED_TERMS)
        if unknown:
            raise ValueError(f"unknown fixed terms {sorted(unknown)}")
        if len(set(self.fixed_terms)) != len(self.fixed_terms):
            raise ValueError("repeated fixed term")
        if "x1:x3" in self.fixed_terms and not {"x1", "x3"} <= set(self.fixed_terms):
            raise ValueError("x1:x3 requires both x1 and x3 as fixed terms")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if len({t.grouping for t in self.random_terms}) != len(self.random_terms):
            raise ValueError("at most one random term per grouping factor")

    @property
    def n_fixed(self) -> int:
        return len(self.fixed_terms)

    @property
    def n_cov_params(self) -> int:
        return sum(t.n_cov_params for t in self.random_terms)

    def n_params(self) -> int:
        """Fixed effects + covariance parameters (+ residual variance for gaussian)."""
        return self.n_fixed + self.n_cov_params + (1 if self.family == "gaussian" else 0)

    def formula(self) -> str:
        fixed = [t for t in self.fixed_terms if t != "intercept"] or ["1"]
        parts = fixed + [t.formula() for t in self.random_terms]
        return f"{self.response} ~ " + " + ".join(parts)

    def nested_in(self, other: "ModelSpec") -> bool:
        if not set(self.fixed_terms) <= set(other.fixed_terms):
            return False
        return all(any(o.contains(t) for o in other.random_terms) for t in self.random_terms)

    def with_family(self, family: str, response: str) -> "ModelSpec":
        return ModelSpec(self.name, self.fixed_terms, self.random_terms, family, response)


_INTERCEPTS = (RandomTerm("climber"), RandomTerm("event"))
_SLOPES = (RandomTerm("climber", slope="x1"), RandomTerm("event", slope="x1"))

LADDER = {
    "M0": ModelSpec("M0", ("intercept",), _INTERCEPTS),
    "M1": ModelSpec("M1", ("intercept",), _SLOPES),
    "M2": ModelSpec("M2", ("intercept", "x2"), _SLOPES),
    "M3": ModelSpec("M3", ("intercept", "x1", "x2", "x3", "x4"), _SLOPES),
    "M4": ModelSpec("M4", ("intercept", "x1", "x2", "x3", "x4", "x1:x3"), _SLOPES),
}
LADDER_NAMES = tuple(LADDER)


def ladder_spec(name: str) -> ModelSpec:
    try:
        return LADDER[name]
    except KeyError:
        raise UnknownModelName(f"unknown model {name!r}; expected one of {', '.join(LADDER)}") from None


def falls_spec(random_slopes: bool = False) -> ModelSpec:
    """M3 covariates with the fall indicator as a Bernoulli response."""
    terms = _SLOPES if random_slopes else _INTERCEPTS
    return ModelSpec("falls", LADDER["M3"].fixed_terms, terms, "binomial_logit", "fell")


@dataclass
class RandomBlock:
    """Columns of Z belonging to one random term.

    Columns are level-major: (level 0 coef 0, level 0 coef 1, level 1 coef 0, ...).
    """

    term: RandomTerm
    levels: np.ndarray  # sorted level ids
    codes: np.ndarray  # per-row level index
    values: np.ndarray  # per-row coefficient values, shape (n, k)
    offset: int = 0

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def n_coef(self) -> int:
        return self.values.shape[1]

    @property
    def q(self) -> int:
        return self.n_levels * self.n_coef

    def level_index(self) -> dict:
        return {lvl: i for i, lvl in enumerate(self.levels)}

    def matrix(self) -> sps.csc_matrix:
        n, k = self.values.shape
        rows = np.repeat(np.arange(n), k)
        cols = (self.codes[:, None] * k + np.arange(k)[None, :]).ravel()
        return sps.csc_matrix((self.values.ravel(), (rows, cols)), shape=(n, self.q))


@dataclass
class DesignMatrices:
    X: np.ndarray
    Z: sps.csc_matrix
    blocks: list[RandomBlock]
    fixed_names: tuple[str, ...]
    y: np.ndarray | None = None
    row_ids: pd.DataFrame | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.Z.shape[1]

    @property
    def group_maps(self) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        """grouping -> (sorted level ids, per-row level index)."""
        return {b.term.grouping: (b.levels, b.codes) for b in self.blocks}


def fixed_column(rows: pd.DataFrame, term: str) -> np.ndarray:
    if term == "intercept":
        return np.ones(len(rows))
    if term == "x1:x3":
        return rows["x1"].to_numpy(float) * rows["x3"].to_numpy(float)
    return rows[term].to_numpy(float)


def canonical_order(spec: ModelSpec, rows: pd.DataFrame) -> np.ndarray:
    """Row order used for fitting, independent of how the caller sorted rows.

    Floating-point sums depend on row order; fitting in a fixed order makes
    estimates exactly invariant to input permutations.
    """
    keys = [fixed_column(rows, t) for t in reversed(spec.fixed_terms)]
    if spec.response in rows:
        keys.insert(0, rows[spec.response].to_numpy(float))
    for col in ("event_id", "climber_id"):
        if col in rows:
            keys.append(rows[col].astype(str).to_numpy())
    return np.lexsort(keys) if keys else np.arange(len(rows))


def build_design(spec: ModelSpec, rows: pd.DataFrame) -> DesignMatrices:
    if rows is None or len(rows) == 0:
        raise EmptyData("no rows to build a design from")
    n = len(rows)
    X = np.column_stack([fixed_column(rows, t) for t in spec.fixed_terms])

    blocks = []
    offset = 0
    for term in spec.random_terms:
        ids = rows[GROUP_COLUMNS[term.grouping]].astype(str).to_numpy()
        levels, codes = np.unique(ids, return_inverse=True)
        cols = [np.ones(n) if c == "intercept" else rows[c].to_numpy(float) for c in term.coef_names]
        block = RandomBlock(term, levels, codes.astype(np.intp), np.column_stack(cols), offset)
        offset += block.q
        blocks.append(block)

    if blocks:
        Z = sps.hstack([b.matrix() for b in blocks], format="csc")
    else:
        Z = sps.csc_matrix((n, 0))
    y = rows[spec.response].to_numpy(float) if spec.response in rows else None
    ids = rows[[c for c in ("climber_id", "event_id") if c in rows]].reset_index(drop=True)
    return DesignMatrices(X, Z, blocks, spec.fixed_terms, y, ids)
