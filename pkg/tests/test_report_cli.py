import json
import math
from datetime import date

import numpy as np
import pandas as pd
import pytest

from speedclimb import cli, report
from speedclimb.data import ClimberProfile, Dataset
from speedclimb.ingest import write_dataset
from speedclimb.preprocess import DisciplineStats
from speedclimb.selection import ComparisonRow, LadderResult

from conftest import attempt, make_event

TABLE1 = {"male": (69, 141, 57), "female": (69, 105, 24)}


def table1_dataset() -> Dataset:
    """69 events whose final rounds carry the published fall and false-start counts."""
    n_events, per_event = 69, 16
    events = [make_event(i) for i in range(n_events)]
    climbers, attempts = [], []
    for gender, (_, falls, false_starts) in TABLE1.items():
        ids = [f"{gender[0].upper()}{k:02d}" for k in range(per_event)]
        climbers += [ClimberProfile(c, c, gender, date(1995, 1, 1)) for c in ids]
        # spread the outcomes round-robin across events: falls first, then false starts, times for the rest
        outcomes = {i: [] for i in range(n_events)}
        for k in range(falls):
            outcomes[k % n_events].append("FALL")
        for k in range(false_starts):
            outcomes[(k + falls) % n_events].append("FS")
        for i, e in enumerate(events):
            marks = outcomes[i] + [6.0 + 0.01 * k for k in range(per_event - len(outcomes[i]))]
            attempts += [attempt(e.event_id, c, "final_16", m) for c, m in zip(ids, marks)]
    return Dataset(climbers, events, attempts, {})


@pytest.fixture
def table1_files(tmp_path):
    return write_dataset(table1_dataset(), tmp_path / "data")


def run(*argv):
    return cli.main([str(a) for a in argv])


def data_flags(paths):
    return ["--results", paths["results"], "--climbers", paths["climbers"], "--skips", paths["skips"]]


@pytest.fixture(scope="module")
def sim_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    assert run("simulate", "--seed", 3, "--out", d) == cli.EXIT_OK
    return {k: d / f for k, f in (("results", "results.csv"), ("climbers", "climbers.csv"),
                                  ("skips", "skip_observations.csv"))}


@pytest.fixture(scope="module")
def sim_binary_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("simbin")
    assert run("simulate", "--seed", 4, "--family", "binomial", "--out", d) == cli.EXIT_OK
    return {k: d / f for k, f in (("results", "results.csv"), ("climbers", "climbers.csv"),
                                  ("skips", "skip_observations.csv"))}


def test_discipline_frame_rounds_at_two_decimals():
    stats = [DisciplineStats.from_counts("female", 69, 105, 24), DisciplineStats.from_counts("male", 69, 141, 57)]
    t = report.discipline_frame(stats)
    assert t["FallRate"].tolist() == ["1.52", "2.04"]
    assert t["FalseStartRate"].tolist() == ["0.35", "0.83"]


def test_describe_reproduces_table1(table1_files, tmp_path):
    out = tmp_path / "out"
    assert run("describe", *data_flags(table1_files), "--out", out) == cli.EXIT_OK
    t = pd.read_csv(out / "fall_false_start.csv", dtype=str).set_index("Category")
    assert t.loc["Men"].to_dict() == {"Events": "69", "Falls": "141", "FalseStarts": "57",
                                      "FallRate": "2.04", "FalseStartRate": "0.83"}
    assert t.loc["Women"].to_dict() == {"Events": "69", "Falls": "105", "FalseStarts": "24",
                                        "FallRate": "1.52", "FalseStartRate": "0.35"}
    for name in ("events_per_year.csv", "skip_usage_by_event.csv", "ranges_by_year.csv"):
        assert (out / name).exists()
    per_year = pd.read_csv(out / "events_per_year.csv")
    assert per_year["events"].sum() == 69


def test_describe_without_finals_exits_input(sim_files, tmp_path):
    # simulated records hold qualification rounds only
    assert run("describe", *data_flags(sim_files), "--out", tmp_path) == cli.EXIT_INPUT


def test_validate_ok_and_missing_file(sim_files, tmp_path, capsys):
    assert run("validate", *data_flags(sim_files)) == cli.EXIT_OK
    assert capsys.readouterr().out.startswith("ok:")
    assert run("validate", "--results", tmp_path / "nope.csv") == cli.EXIT_INPUT
    assert run("validate") == cli.EXIT_INPUT


def test_invalid_dataset_exits_input(tmp_path):
    bad = tmp_path / "results.csv"
    (tmp_path / "good").mkdir()
    paths = write_dataset(table1_dataset(), tmp_path / "good")
    text = paths["results"].read_text().splitlines()
    text[1] = text[1].replace(",male,", ",unknown,").replace(",female,", ",unknown,")
    bad.write_text("\n".join(text) + "\n")
    assert run("validate", "--results", bad) == cli.EXIT_INPUT


def test_alpha_validation(sim_files, tmp_path):
    for alpha in (0, 1, 1.5, -0.1):
        assert run("ladder", *data_flags(sim_files), "--alpha", alpha, "--out", tmp_path) == cli.EXIT_INPUT
    with pytest.raises(cli.InputError):
        cli.RunConfig(alpha=0.0)
    assert run("fit", *data_flags(sim_files), "--criterion", "XYZ", "--out", tmp_path) == cli.EXIT_INPUT
    assert run("fit", *data_flags(sim_files), "--model", "M9", "--out", tmp_path) == cli.EXIT_INPUT


def test_fit_summary_document(sim_files, tmp_path, capsys):
    assert run("fit", *data_flags(sim_files), "--out", tmp_path) == cli.EXIT_OK
    doc = json.loads((tmp_path / "fit_M3_ML.json").read_text())
    terms = [fe["term"] for fe in doc["fixed_effects"]]
    assert terms == ["intercept", "x1", "x2", "x3", "x4"]
    for fe in doc["fixed_effects"]:
        assert fe["ci_lower"] < fe["estimate"] < fe["ci_upper"]
    mult = {m["term"]: m for m in doc["effect_multipliers"]}
    fe = {f["term"]: f for f in doc["fixed_effects"]}
    assert mult["x1"]["multiplier"] == pytest.approx(math.exp(fe["x1"]["estimate"]), rel=1e-12)
    assert mult["x1"]["ci_lower"] == pytest.approx(math.exp(fe["x1"]["ci_lower"]), rel=1e-12)
    assert set(doc["random_effects"]) == {"sigma2", "eta00", "tau00", "eta11", "tau11", "eta01", "tau01"}
    assert doc["convergence"]["converged"] is True
    assert doc["coding"]["x2"]
    text = (tmp_path / "fit_M3_ML.txt").read_text()
    assert "gamma01" in text and "Multiplicative effects" in text
    assert (tmp_path / "scaling.json").exists() and (tmp_path / "model_rows.csv").exists()


def test_fit_reml_stem(sim_files, tmp_path):
    assert run("fit", *data_flags(sim_files), "--model", "M1", "--criterion", "reml", "--out", tmp_path) == 0
    assert json.loads((tmp_path / "fit_M1_REML.json").read_text())["criterion"] == "REML"


def test_fit_failure_exits_two(sim_files, tmp_path, monkeypatch):
    from speedclimb.errors import SingularSystem

    def boom(*a, **k):
        raise SingularSystem("forced")

    monkeypatch.setattr(cli.lmm, "fit", boom)
    assert run("fit", *data_flags(sim_files), "--out", tmp_path) == cli.EXIT_FIT


def test_falls_reports_skip_wald_line(sim_binary_files, tmp_path, capsys):
    assert run("falls", *data_flags(sim_binary_files), "--out", tmp_path) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "wald x1" in out
    doc = json.loads((tmp_path / "falls.json").read_text())
    w = {t["term"]: t for t in doc["wald_tests"]}
    assert 0.0 <= w["x1"]["p_value"] <= 1.0
    assert doc["family"] == "binomial_logit" and doc["link"] == "logit"


def test_single_model_ladder(sim_files, tmp_path):
    assert run("ladder", *data_flags(sim_files), "--models", "M0", "--out", tmp_path) == cli.EXIT_OK
    t = pd.read_csv(tmp_path / "ladder.csv")
    assert list(t.columns) == ["Model", "BIC", "Statistic", "df", "p_value"]
    assert len(t) == 1 and t["Statistic"].isna().all()
    assert "selected: M0" in (tmp_path / "ladder.txt").read_text()


def test_ladder_exit_two_when_next_model_fails(sim_files, tmp_path, monkeypatch):
    from speedclimb import selection
    from speedclimb.errors import ConvergenceFailure
    real = selection.lmm.fit

    def flaky(spec, rows, criterion="ML", **k):
        if spec.name == "M1":
            raise ConvergenceFailure("forced")
        return real(spec, rows, criterion, **k)

    monkeypatch.setattr(selection.lmm, "fit", flaky)
    assert run("ladder", *data_flags(sim_files), "--models", "M0,M1", "--out", tmp_path) == cli.EXIT_FIT
    assert "failed" in (tmp_path / "ladder.txt").read_text()


def test_ladder_text_alpha_switch():
    rows = [ComparisonRow("M3", 100.0, None, None, None, -40.0, 10),
            ComparisonRow("M4", 104.0, 4.5838, 1, 0.0323, -37.7, 11)]
    from speedclimb.selection import select_sequential
    assert select_sequential(rows, 0.05) == "M4"
    assert select_sequential(rows, 0.01) == "M3"
    text = report.ladder_text(LadderResult(rows, 0.01, "M3", "M3", {}))
    assert "selected: M3" in text and "0.0323" in text


def test_recover_two_replicates(tmp_path):
    assert run("recover", "--replicates", 2, "--seed", 1, "--model", "M1", "--out", tmp_path) == cli.EXIT_OK
    t = pd.read_csv(tmp_path / "recovery.csv")
    assert {"bias", "rmse", "coverage"} <= set(t.columns)
    doc = json.loads((tmp_path / "recovery.json").read_text())
    assert doc["n_replicates"] == 2


def test_simulate_writes_truth(tmp_path):
    assert run("simulate", "--seed", 5, "--out", tmp_path) == cli.EXIT_OK
    truth = json.loads((tmp_path / "truth.json").read_text())
    assert truth["params"]["seed"] == 5 and truth["truth"]["x1"] == -0.1568
    rows = pd.read_csv(tmp_path / "model_rows.csv")
    assert np.allclose(np.log(rows["y"]), rows["log_y"])


def test_ranges_outputs(tmp_path):
    d = tmp_path / "data"
    paths = write_dataset(table1_dataset(), d)
    assert run("ranges", *data_flags(paths), "--out", tmp_path / "o") == cli.EXIT_OK
    r = pd.read_csv(tmp_path / "o" / "ranges.csv")
    assert (r["range"] >= 0).all()
    assert (tmp_path / "o" / "ranges_summary.csv").exists()


def test_config_file_overridden_by_flags(sim_files, tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text(f"# ladder settings\nresults = {sim_files['results']}\nalpha = 0.05\nmodels = M0, M1\n"
                        f"out = {tmp_path / 'from_file'}\n")
    args = cli.build_parser().parse_args(["ladder", "--config", str(cfg_file), "--alpha", "0.02"])
    cfg = cli.build_config(args)
    assert cfg.alpha == 0.02 and cfg.models == ("M0", "M1")
    assert cfg.out == (tmp_path / "from_file").resolve() and cfg.results.is_absolute()
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert run("ladder", "--config", bad) == cli.EXIT_INPUT


def _snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.is_file()}


def test_outputs_byte_identical_across_runs(sim_files, tmp_path):
    for sub in ("a", "b"):
        assert run("simulate", "--seed", 8, "--out", tmp_path / sub / "sim") == 0
        assert run("fit", *data_flags(sim_files), "--model", "M2", "--out", tmp_path / sub / "fit") == 0
    for sub in ("sim", "fit"):
        assert _snapshot(tmp_path / "a" / sub) == _snapshot(tmp_path / "b" / sub)


def test_json_cleans_non_finite():
    assert json.loads(report.dumps({"a": float("nan"), "b": np.float64(1.5), "c": np.int64(2)})) == \
        {"a": None, "b": 1.5, "c": 2}
