from __future__ import annotations

import json
import math

import numpy as np
import pandas as pd
import pytest

from pofrailty.errors import ConfigError, SchemaError
from pofrailty.io import (
    build_fit_report,
    load_scenario,
    read_clustered_csv,
    report_from_json,
    report_to_json,
    summary_frame,
    write_summary,
)
from pofrailty.simulation import ParameterSummary, ScenarioConfig, SummaryTable
from pofrailty.variance import sandwich

VALID_CSV = """litter,rx,time,status
1,1,101,0
1,0,49,1
1,0,104,0
2,1,91,0
2,0,104,0
2,0,102,1
3,1,88,1
"""


def _write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_reads_clusters_in_file_order(tmp_path):
    dataset = read_clustered_csv(_write(tmp_path, VALID_CSV), "litter", "time", "status", ["rx"])
    assert [c.id for c in dataset.clusters] == ["1", "2", "3"]
    assert [c.size for c in dataset.clusters] == [3, 3, 1]
    second = dataset.clusters[1].members
    assert [obs.member_index for obs in second] == [0, 1, 2]
    assert second[2].time == 102.0 and second[2].event == 1
    assert dataset.clusters[0].members[0].covariates == (1.0,)


def test_explicit_member_column(tmp_path):
    text = "c,m,t,d,x\na,2,1.0,1,0.1\na,0,2.0,0,0.2\n"
    dataset = read_clustered_csv(_write(tmp_path, text), "c", "t", "d", ["x"], member_col="m")
    assert [obs.member_index for obs in dataset.clusters[0].members] == [2, 0]


def test_bad_event_reports_line(tmp_path):
    text = VALID_CSV.replace("1,0,49,1", "1,0,49,2")
    with pytest.raises(SchemaError, match="line 3") as info:
        read_clustered_csv(_write(tmp_path, text), "litter", "time", "status", ["rx"])
    assert info.value.violations == [(3, "event must be 0 or 1, got 2")]


def test_missing_column_reports_header(tmp_path):
    with pytest.raises(SchemaError, match="line 1: missing column"):
        read_clustered_csv(_write(tmp_path, VALID_CSV), "litter", "time", "status", ["weight"])


def test_non_numeric_and_negative_values(tmp_path):
    text = VALID_CSV.replace("2,1,91,0", "2,1,abc,0").replace("3,1,88,1", "3,1,-4,1")
    with pytest.raises(SchemaError) as info:
        read_clustered_csv(_write(tmp_path, text), "litter", "time", "status", ["rx"])
    lines = [line for line, _ in info.value.violations]
    assert 5 in lines
    assert 8 in lines
    assert any("negative time" in message for _, message in info.value.violations)


def test_duplicate_member_index(tmp_path):
    text = "c,m,t,d\na,0,1.0,1\na,0,2.0,0\n"
    with pytest.raises(SchemaError, match="duplicate member index"):
        read_clustered_csv(_write(tmp_path, text), "c", "t", "d", [], member_col="m")


def test_dataset_without_failures_is_schema_error(tmp_path):
    text = "c,t,d\na,1.0,0\nb,2.0,0\n"
    with pytest.raises(SchemaError, match="no failures"):
        read_clustered_csv(_write(tmp_path, text), "c", "t", "d", [])


def test_report_json_round_trip(small_dataset, small_fit):
    est = sandwich(small_dataset, small_fit)
    report = build_fit_report(
        small_dataset,
        small_fit,
        est,
        ["z1", "z2"],
        seed=11,
        config={"corr_kind": "exchangeable"},
        rho_profile=[(0.1, -1.5), (0.2, -1.4)],
        flags=["rho_at_boundary"],
    )
    text = report_to_json(report)
    assert report_to_json(report_from_json(text)) == text
    data = json.loads(text)
    assert data["beta"][0]["name"] == "z1"
    assert data["beta"][0]["exp_estimate"] == pytest.approx(math.exp(small_fit.beta_hat[0]))
    assert len(data["baseline"]["time"]) == small_fit.baseline_hat.n_jumps


def test_report_without_sandwich_writes_null(small_dataset, small_fit):
    report = build_fit_report(small_dataset, small_fit, None, ["z1", "z2"], seed=0)
    data = json.loads(report_to_json(report))
    assert data["beta"][0]["se"] is None
    assert data["condition_number"] is None
    assert math.isnan(report_from_json(report_to_json(report)).beta[0].se)


def test_load_scenario(tmp_path):
    path = _write(tmp_path, 'label = "ar"\ncorr_kind = "ar1"\nrho_true = 0.9\nn_reps = 10\nz1_sd = 0.7071\n', "ar.toml")
    cfg = load_scenario(path, default_seed=5)
    assert cfg.label == "ar"
    assert cfg.rho_true == 0.9
    assert cfg.n_reps == 10
    assert cfg.master_seed == 5
    assert cfg.corr_kind.value == "ar1"
    assert cfg.z1_sd == 0.7071


def test_load_scenario_label_defaults_to_stem(tmp_path):
    cfg = load_scenario(_write(tmp_path, "master_seed = 3\n", "plain.toml"), default_seed=5)
    assert cfg.label == "plain"
    assert cfg.master_seed == 3
    assert cfg.z1_sd == 0.5


@pytest.mark.parametrize(
    "text",
    ["unknown_key = 1\n", "rho_true = 1.5\n", "n_reps = 1\n", "beta_true = [1.0]\n", "rho_true = [\n", "z1_sd = 0.0\n"],
    ids=["unknown-key", "rho-out-of-range", "too-few-reps", "beta-length", "bad-toml", "z1-sd-zero"],
)
def test_load_scenario_rejects(tmp_path, text):
    with pytest.raises(ConfigError):
        load_scenario(_write(tmp_path, text, "bad.toml"), default_seed=1)


def test_load_scenario_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_scenario(tmp_path / "nope.toml", default_seed=1)


def _table(label):
    rows = tuple(
        ParameterSummary(name, truth, 0.01, 0.1, 0.11, 0.0122, 0.95, 10)
        for name, truth in (("beta0", 1.2), ("beta1", 2.5), ("rho", 0.5))
    )
    return SummaryTable(label, rows, n_reps=10, n_converged=10, flagged=False, censoring=0.4, config=ScenarioConfig(n_reps=10))


def test_write_summary(tmp_path):
    csv_path, json_path = write_summary([_table("a"), _table("b")], tmp_path / "out", "benchmark")
    frame = pd.read_csv(csv_path)
    assert list(frame.columns) == list(summary_frame([_table("a")]).columns)
    assert len(frame) == 6
    assert set(frame["scenario"]) == {"a", "b"}
    payload = json.loads(json_path.read_text(encoding="utf-8"))
    assert payload[0]["config"]["corr_kind"] == "exchangeable"
    assert np.isclose(payload[1]["rows"][2]["coverage"], 0.95)
