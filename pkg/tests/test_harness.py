import csv
import json
from dataclasses import replace

import pytest

from selfevolve.config import RunConfig, load_config
from selfevolve.errors import ConfigError, ContractViolation, ParseError, UnsupportedVersionError
from selfevolve.harness.checkpoint import checkpoint_dict, checkpoint_load, checkpoint_save
from selfevolve.harness.cli import main
from selfevolve.harness.experiment import CRITERIA, compare_paradigms, prepare, run_experiment
from selfevolve.harness.report import CRITERIA_COLUMNS, SERIES_COLUMNS, TELEMETRY_COLUMNS, MetricSeries, emit_report, fmt

SMALL = ["stream_length=120", "tasks.count_per_tier=30", "cl.steps=40", "rl.steps=40", "ga.generations=8"]


# -- config ------------------------------------------------------------------------------


def test_config_defaults_round_trip():
    cfg = RunConfig()
    assert RunConfig.from_dict(cfg.to_dict()) == cfg
    d = cfg.to_dict()
    assert d["thresholds"] == {"epsilon_fail": 0.3, "epsilon_verify": 0.02, "delta_safe": 0.05, "window": 20}
    assert d["tasks"]["n_features"] == 16 and d["tasks"]["max_difficulty"] == 5
    assert d["rl"]["batch_size"] == 32 and d["rl"]["eta"] == 0.05 and d["rl"]["gamma"] == 1e-3


@pytest.mark.parametrize(
    "override, key",
    [
        ("ga.elite_count=16", "ga.elite_count"),
        ("thresholds.window=0", "thresholds.window"),
        ("tasks.split_ratios=[0.5,0.5,0.5]", "tasks.split_ratios"),
        ("routing.temperature=0", None),
        ("evolution.mode=xyz", "evolution.mode"),
        ("forge.kappa=-1", "forge.kappa"),
    ],
)
def test_config_errors_name_the_key(override, key):
    cfg = RunConfig().with_overrides([override])
    if key is None:
        cfg.validate()  # temperature only matters for softmax routing
        return
    with pytest.raises(ConfigError) as info:
        cfg.validate()
    assert info.value.key == key


def test_unknown_and_mistyped_keys():
    with pytest.raises(ConfigError) as info:
        RunConfig.from_dict({"rl": {"etaa": 0.1}})
    assert info.value.key == "rl.etaa"
    with pytest.raises(ConfigError) as info:
        RunConfig.from_dict({"ga": {"size": "big"}})
    assert info.value.key == "ga.size"
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(["nonsense"])


def test_load_yaml_with_overrides(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("seed: 9\nrl:\n  eta: 0.2\nevolution:\n  mode: ga\n")
    cfg = load_config(str(path), ["rl.eta=0.3", "tasks.split_ratios=[0.6, 0.2, 0.2]"])
    assert cfg.seed == 9 and cfg.rl.eta == 0.3 and cfg.evolution.mode == "ga"
    assert cfg.tasks.split_ratios == (0.6, 0.2, 0.2)


# -- reports -------------------------------------------------------------------------------


def test_empty_series_is_header_only(tmp_path):
    emit_report(MetricSeries("s", "x"), tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text() == ",".join(SERIES_COLUMNS) + "\n"


def test_reemit_is_byte_identical(tmp_path):
    series = [MetricSeries("a", "x", [(1, 0.5, 0.1), (2, 0.25, 0.0)]), MetricSeries("b", "g", [(0, 1e-7, 0.0)])]
    for fmt_name in ("csv", "jsonl"):
        emit_report(series, tmp_path / f"1.{fmt_name}", fmt_name)
        emit_report(series, tmp_path / f"2.{fmt_name}", fmt_name)
        assert (tmp_path / f"1.{fmt_name}").read_bytes() == (tmp_path / f"2.{fmt_name}").read_bytes()


def test_csv_schema_and_number_format(tmp_path):
    emit_report([MetricSeries("a", "x", [(1, 1234567.5, 0.1)])], tmp_path / "s.csv")
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows[0] == list(SERIES_COLUMNS)
    assert all(len(r) == len(SERIES_COLUMNS) for r in rows)
    assert rows[1][3] == "1234567.5"
    assert len(TELEMETRY_COLUMNS) == 6 and len(CRITERIA_COLUMNS) == 7
    assert fmt(float("nan")) == "nan" and fmt(True) == "true" and fmt(None) == ""


def test_series_x_must_increase():
    with pytest.raises(ContractViolation):
        MetricSeries("s", "x", [(1, 0, 0), (1, 0, 0)])


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        emit_report([], tmp_path / "missing" / "dir" / "out.csv")


def test_jsonl_rows(tmp_path):
    emit_report([{"a": 1, "b": 0.5}], tmp_path / "r.jsonl", "jsonl", ("b", "a"))
    assert (tmp_path / "r.jsonl").read_text() == '{"b":0.5,"a":1}\n'


# -- experiments ------------------------------------------------------------------------------


def test_zero_episodes_single_generation_point():
    cfg = RunConfig(seed=1).with_overrides(["evolution.max_episodes=0"])
    result = run_experiment(cfg)
    assert len(result.series["generation_fitness"].points) == 1
    assert result.summary["episodes"] == 0


def test_metric_files_are_deterministic(tmp_path):
    cfg = RunConfig(seed=2).with_overrides(SMALL)
    for name in ("a", "b"):
        r = run_experiment(cfg)
        emit_report(list(r.series.values()), tmp_path / f"{name}.csv")
        emit_report(r.telemetry, tmp_path / f"{name}_t.csv", "csv", TELEMETRY_COLUMNS)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a_t.csv").read_bytes() == (tmp_path / "b_t.csv").read_bytes()


def test_cl_success_series_covers_every_tier():
    cfg = RunConfig(seed=0)
    cfg = replace(cfg, evolution=replace(cfg.evolution, mode="cl"))
    result = run_experiment(cfg)
    xs = [x for x, _, _ in result.series["success_by_tier"].points]
    assert xs == [float(t) for t in range(1, cfg.tasks.max_difficulty + 1)]
    tool_use = result.series["tool_use"].points
    assert len(tool_use) == cfg.stream_length // cfg.metrics.tool_use_window


def test_compare_schema_and_seed_count():
    cfg = RunConfig().with_overrides(SMALL)
    with pytest.raises(ConfigError):
        compare_paradigms(cfg, [0, 1])
    report, _ = compare_paradigms(cfg, [0, 1, 2])
    dims = report["dimensions"]
    assert [d["dimension"] for d in dims] == [
        "learning_speed",
        "generalization",
        "high_difficulty_mastery",
        "exploration",
        "stability",
        "diversity",
        "tool_efficiency",
    ]
    assert len(dims) == len(CRITERIA) == 7
    for d in dims:
        assert set(d["scores"]) == {"cl", "rl", "ga"}
        assert d["definition"] and d["winner"]


def test_ga_diversity_at_least_rl():
    report, _ = compare_paradigms(RunConfig(), list(range(10)))
    div = next(d for d in report["dimensions"] if d["dimension"] == "diversity")["scores"]
    assert div["ga"]["mean"] >= div["rl"]["mean"]


# -- checkpoints ----------------------------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    lc = prepare(RunConfig(seed=6).with_overrides(SMALL)).run(until=60)
    checkpoint_save(lc, tmp_path / "c.json")
    loaded = checkpoint_load(tmp_path / "c.json")
    assert checkpoint_dict(loaded) == checkpoint_dict(lc)


def test_resume_matches_uninterrupted(tmp_path):
    cfg = RunConfig(seed=7)
    full = prepare(cfg).run().runlog()
    for k in (1, 180, 333):
        lc = prepare(cfg).run(until=k)
        checkpoint_save(lc, tmp_path / "c.json")
        resumed = checkpoint_load(tmp_path / "c.json").run().runlog()
        assert resumed.to_jsonl() == full.to_jsonl()
        assert resumed.summary_json() == full.summary_json()


def test_corrupted_checkpoint(tmp_path):
    lc = prepare(RunConfig(seed=6).with_overrides(SMALL)).run(until=30)
    path = checkpoint_save(lc, tmp_path / "c.json")
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    before = json.dumps(lc.state.to_dict(), sort_keys=True)
    with pytest.raises(ParseError):
        checkpoint_load(path)
    assert json.dumps(lc.state.to_dict(), sort_keys=True) == before


def test_checkpoint_version_mismatch(tmp_path):
    lc = prepare(RunConfig(seed=6).with_overrides(SMALL)).run(until=10)
    data = checkpoint_dict(lc)
    data["version"] = 2
    (tmp_path / "c.json").write_text(json.dumps(data))
    with pytest.raises(UnsupportedVersionError):
        checkpoint_load(tmp_path / "c.json")


# -- command line ---------------------------------------------------------------------------------


def test_cli_end_to_end(tmp_path, capsys):
    sets = sum((["--set", s] for s in SMALL), [])
    out = tmp_path
    assert main(["gen-tasks", "--out", str(out / "tasks.json"), "--seed", "3", *sets]) == 0
    assert main(["gen-tasks", "--out", str(out / "tasks.jsonl"), "--format", "taskcraft", "--seed", "3", *sets]) == 0
    assert main(["ingest", str(out / "tasks.jsonl"), "--out", str(out / "ingested.json")]) == 0
    assert main(["run", "--mode", "rl", "--tasks", str(out / "tasks.json"), "--out", str(out / "r1"), "--checkpoint-at", "50", "--seed", "3", *sets]) == 0
    assert main(["resume", str(out / "r1" / "checkpoint.json"), "--out", str(out / "r2")]) == 0
    assert (out / "r1" / "events.jsonl").read_bytes() == (out / "r2" / "events.jsonl").read_bytes()
    for name in ("summary.json", "series.csv", "telemetry.csv"):
        assert (out / "r1" / name).exists()
    assert main(["report", str(out / "r1" / "summary.json"), "--out", str(out / "summary.csv")]) == 0
    assert main(["compare", "--seeds", "3", "--out", str(out / "cmp"), *sets]) == 0
    assert main(["report", str(out / "cmp" / "criteria.json"), "--out", str(out / "crit.jsonl"), "--format", "jsonl"]) == 0
    assert len((out / "crit.jsonl").read_text().splitlines()) == 21
    printed = capsys.readouterr().out
    assert "seed: 3" in printed and f"out: {out / 'r1'}" in printed


def test_cli_reports_config_errors(capsys):
    assert main(["run", "--out", "unused", "--set", "ga.size=1"]) == 2
    assert "ga.size" in capsys.readouterr().err
