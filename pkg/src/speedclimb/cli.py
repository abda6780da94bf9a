"""Command-line entry point.

    speedclimb describe --results results.csv --climbers climbers.csv --out out/
    speedclimb ladder   --results ... --alpha 0.01
    speedclimb simulate --preset small --seed 7 --out sim/

Settings may also come from a ``key = value`` file given with ``--config``;
flags on the command line win.  Exit codes: 0 success, 1 bad input,
2 a model failed to fit.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import pandas as pd

from . import glmm, lmm, preprocess, report
from .data import GENDERS, validate
from .design import LADDER_NAMES, falls_spec, ladder_spec
from .errors import CompleteSeparation, ConvergenceFailure, SingularSystem, SpeedClimbError
from .ingest import load_dataset, write_dataset
from .selection import DEFAULT_ALPHA, compare_ladder
from .simulate import PUBLISHED_TRUTH, SimulationParams, recovery_report, simulate_binary, simulate_dataset
from .simulate import simulate_binary_records, simulate_records

EXIT_OK, EXIT_INPUT, EXIT_FIT = 0, 1, 2
FIT_ERRORS = (ConvergenceFailure, SingularSystem, CompleteSeparation)

PRESETS = {
    "published": PUBLISHED_TRUTH,
    # quick desk-scale scenario with the same parameter values
    "small": replace(PUBLISHED_TRUTH, n_climbers=60, n_events=20, attendance_prob=0.5),
}


class InputError(SpeedClimbError):
    """Bad configuration or a dataset that fails validation."""


@dataclass
class RunConfig:
    command: str = ""
    results: Path | None = None
    climbers: Path | None = None
    skips: Path | None = None
    out: Path = Path("out")
    model: str = "M3"
    models: tuple = LADDER_NAMES
    criterion: str = "ML"
    alpha: float = DEFAULT_ALPHA
    level: float = 0.95
    seed: int | None = None
    preset: str = "small"
    family: str = "gaussian"
    replicates: int = 2
    random_slopes: bool = False

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InputError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 < self.level < 1.0:
            raise InputError(f"level must lie in (0, 1), got {self.level}")
        if self.criterion.upper() not in lmm.CRITERIA:
            raise InputError(f"criterion must be ML or REML, got {self.criterion!r}")
        self.criterion = self.criterion.upper()
        if self.family not in ("gaussian", "binomial"):
            raise InputError(f"family must be gaussian or binomial, got {self.family!r}")
        if self.preset not in PRESETS:
            raise InputError(f"unknown preset {self.preset!r}; expected one of {', '.join(PRESETS)}")
        for name in ("results", "climbers", "skips"):
            p = getattr(self, name)
            if p is not None:
                setattr(self, name, Path(p).expanduser().resolve())
        self.out = Path(self.out).expanduser().resolve()


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise InputError(f"not a boolean: {text!r}")


def _models(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(text)
    return tuple(m.strip() for m in str(text).split(",") if m.strip())


CONVERTERS = {
    "results": Path, "climbers": Path, "skips": Path, "out": Path,
    "alpha": float, "level": float, "seed": int, "replicates": int,
    "random_slopes": _bool, "models": _models,
}


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    valid = {f.name for f in fields(RunConfig)} - {"command"}
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in valid:
            raise InputError(f"{path}:{n}: unknown setting {key!r}")
        out[key] = value
    return out


def build_config(args: argparse.Namespace) -> RunConfig:
    settings = read_config_file(args.config) if args.config else {}
    for f in fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            settings[f.name] = value
    try:
        converted = {k: CONVERTERS.get(k, str)(v) if isinstance(v, str) else v for k, v in settings.items()}
    except ValueError as exc:
        raise InputError(f"bad setting: {exc}") from None
    converted["command"] = args.command
    return RunConfig(**converted)


# --- helpers ----------------------------------------------------------------

def _write_csv(frame: pd.DataFrame, path: Path):
    frame.to_csv(path, index=False, lineterminator="\n")


def _load(cfg: RunConfig):
    if cfg.results is None:
        raise InputError("--results is required")
    dataset = load_dataset(cfg.results, cfg.climbers, cfg.skips)
    problems = validate(dataset)
    if problems:
        lines = "\n  ".join(f"{v.kind}: {v.message}" for v in problems[:20])
        raise InputError(f"{len(problems)} validation problem(s):\n  {lines}")
    return dataset


def _out(cfg: RunConfig) -> Path:
    cfg.out.mkdir(parents=True, exist_ok=True)
    return cfg.out


def _sim_params(cfg: RunConfig) -> SimulationParams:
    params = PRESETS[cfg.preset]
    return params if cfg.seed is None else params.with_seed(cfg.seed)


def _emit_fit(fit, out: Path, stem: str, level: float):
    summary = report.fit_summary(fit, level)
    report.write_json(out / f"{stem}.json", summary)
    text = report.fit_text(summary)
    (out / f"{stem}.txt").write_text(text, encoding="utf-8")
    return text


# --- commands -----------------------------------------------------------------

def cmd_validate(cfg: RunConfig) -> int:
    dataset = _load(cfg)
    print(f"ok: {len(dataset.climbers)} climbers, {len(dataset.events)} events, {len(dataset.attempts)} attempts")
    return EXIT_OK


def cmd_describe(cfg: RunConfig) -> int:
    dataset = _load(cfg)
    out = _out(cfg)
    stats = [preprocess.discipline_stats(dataset, g) for g in GENDERS]
    table = report.discipline_frame(stats)
    _write_csv(table, out / "fall_false_start.csv")
    _write_csv(preprocess.events_per_year(dataset), out / "events_per_year.csv")
    _write_csv(preprocess.skip_usage_by_event(dataset), out / "skip_usage_by_event.csv")
    _write_csv(preprocess.ranges_by_year(dataset), out / "ranges_by_year.csv")
    print(table.to_string(index=False))
    return EXIT_OK


def cmd_fit(cfg: RunConfig) -> int:
    dataset = _load(cfg)
    out = _out(cfg)
    rows, scaling = preprocess.build_model_rows(dataset)
    _write_csv(rows, out / "model_rows.csv")
    report.write_json(out / "scaling.json", scaling.to_dict())
    spec = ladder_spec(cfg.model)
    stem = f"fit_{cfg.model}_{cfg.criterion}"
    try:
        fit = lmm.fit(spec, rows, cfg.criterion, scaling=scaling)
    except ConvergenceFailure as exc:
        if exc.best is not None:
            _emit_fit(exc.best, out, stem, cfg.level)
        raise
    print(_emit_fit(fit, out, stem, cfg.level), end="")
    return EXIT_OK


def cmd_ladder(cfg: RunConfig) -> int:
    dataset = _load(cfg)
    out = _out(cfg)
    for name in cfg.models:
        ladder_spec(name)
    rows, _ = preprocess.build_model_rows(dataset)
    result = compare_ladder(rows, cfg.models, cfg.alpha)
    _write_csv(report.ladder_frame(result), out / "ladder.csv")
    text = report.ladder_text(result)
    (out / "ladder.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    names = [r.model for r in result.rows]
    if result.selected is None:
        return EXIT_FIT
    nxt = names.index(result.selected) + 1
    # a failed next step means the selection was cut short, not decided
    if nxt < len(names) and result.rows[nxt].error:
        return EXIT_FIT
    return EXIT_OK


def cmd_falls(cfg: RunConfig) -> int:
    dataset = _load(cfg)
    out = _out(cfg)
    rows, scaling = preprocess.build_fall_rows(dataset)
    spec = falls_spec(cfg.random_slopes)
    try:
        fit = glmm.fit_binomial(spec, rows, scaling=scaling)
    except ConvergenceFailure as exc:
        if exc.best is not None:
            _emit_fit(exc.best, out, "falls", cfg.level)
        raise
    print(_emit_fit(fit, out, "falls", cfg.level), end="")
    return EXIT_OK


def cmd_ranges(cfg: RunConfig) -> int:
    dataset = _load(cfg)
    out = _out(cfg)
    ranges = preprocess.ranges_by_year(dataset)
    _write_csv(ranges, out / "ranges.csv")
    summary = (ranges.groupby(["year", "uses_skip"])["range"]
               .agg(n="size", mean="mean", median="median").reset_index())
    _write_csv(summary, out / "ranges_summary.csv")
    print(summary.to_string(index=False))
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    out = _out(cfg)
    params = _sim_params(cfg)
    if cfg.family == "gaussian":
        dataset = simulate_records(params)
        rows, _ = simulate_dataset(params)
    else:
        dataset = simulate_binary_records(params)
        rows = simulate_binary(params)
    write_dataset(dataset, out)
    _write_csv(rows, out / "model_rows.csv")
    truth = {"family": cfg.family, "preset": cfg.preset, "params": params.to_dict(), "truth": params.truth()}
    report.write_json(out / "truth.json", truth)
    print(f"wrote {len(rows)} rows from {params.n_climbers} climbers x {params.n_events} events to {out}")
    return EXIT_OK


def cmd_recover(cfg: RunConfig) -> int:
    out = _out(cfg)
    params = _sim_params(cfg)
    rep = recovery_report(params, cfg.replicates, cfg.model, cfg.criterion, cfg.family, cfg.level)
    report.write_json(out / "recovery.json", rep.to_dict())
    _write_csv(rep.summary.reset_index(), out / "recovery.csv")
    print(rep.summary.round(6).to_string())
    if rep.failures:
        print(f"{len(rep.failures)} of {cfg.replicates} replicate(s) failed")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate, "describe": cmd_describe, "fit": cmd_fit, "ladder": cmd_ladder,
    "falls": cmd_falls, "ranges": cmd_ranges, "simulate": cmd_simulate, "recover": cmd_recover,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # defaults stay None so config-file values are only overridden by explicit flags
    common.add_argument("--config", help="key = value settings file")
    common.add_argument("--results", help="results CSV")
    common.add_argument("--climbers", help="climber registry CSV")
    common.add_argument("--skips", help="skip observations CSV")
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--model", help="model name, M0..M4 (default: M3)")
    common.add_argument("--criterion", help="ML or REML (default: ML)")
    common.add_argument("--alpha", help="LRT significance level (default: 0.01)")
    common.add_argument("--level", help="confidence level for intervals (default: 0.95)")
    common.add_argument("--seed", help="random seed for simulation")

    parser = argparse.ArgumentParser(prog="speedclimb", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("validate", "describe", "fit", "ranges"):
        sub.add_parser(name, parents=[common])
    p = sub.add_parser("ladder", parents=[common])
    p.add_argument("--models", help="comma-separated model names (default: M0,M1,M2,M3,M4)")
    p = sub.add_parser("falls", parents=[common])
    p.add_argument("--random-slopes", dest="random_slopes", action="store_const", const=True,
                   help="add skip slopes to both random terms")
    for name in ("simulate", "recover"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--preset", help=f"parameter preset: {', '.join(PRESETS)} (default: small)")
        p.add_argument("--family", help="gaussian or binomial (default: gaussian)")
        if name == "recover":
            p.add_argument("--replicates", help="number of replicates (default: 2)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = build_config(args)
        return COMMANDS[cfg.command](cfg)
    except FIT_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (SpeedClimbError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
