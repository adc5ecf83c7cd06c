import copy
import csv
import json
import math

import numpy as np
import pytest

from lrmhedge.harness import (AGGREGATE_COLUMNS, ORACLE_COLUMNS, PATH_COLUMNS, ConfigError, death_history,
                              emit_reports, filter_oracle_tv, load_config, run_ensemble)
from scenarios import within

MINIMAL = {
    "hazard": {"generator": [[-1.0, 1.0], [2.0, -2.0]], "hazard_times": [0.0],
               "hazard_values": [[0.02, 0.2]], "horizon": 5.0, "initial_dist": [0.5, 0.5]},
    "market": {"s0": 100.0, "mu": 0.05, "sigma": 0.2},
    "claim": {"contract": "pure_endowment", "payoff": "call", "strike": 100.0},
    "l_a": 10, "grid_steps": 100, "n_paths": 20, "quadrature_nodes": 65, "seed": 3, "outputs": "out",
}


def doc(**changes):
    d = copy.deepcopy(MINIMAL)
    for key, value in changes.items():
        node = d
        *path, last = key.split("__")
        for p in path:
            node = node[p]
        if value is None:
            del node[last]
        else:
            node[last] = value
    return d


# --- loading --------------------------------------------------------------------

def test_missing_sigma_names_field():
    with pytest.raises(ConfigError) as err:
        load_config(doc(market__sigma=None))
    assert err.value.field == "market.sigma"
    assert "market.sigma" in str(err.value)


def test_negative_hazard_names_cell():
    with pytest.raises(ConfigError) as err:
        load_config(doc(hazard__hazard_values=[[0.02, -0.2]]))
    assert err.value.field == "hazard.hazard_values[0][1]"


def test_round_trip_is_semantically_identical():
    cfg = load_config(MINIMAL)
    again = load_config(json.loads(cfg.to_json()))
    assert again.to_dict() == cfg.to_dict()
    d = cfg.to_dict()
    for key in ("l_a", "grid_steps", "n_paths", "seed", "outputs", "quadrature_nodes"):
        assert d[key] == MINIMAL[key]
    assert d["hazard"] == MINIMAL["hazard"] and d["market"] == MINIMAL["market"]


def test_load_from_text_and_path(tmp_path):
    text = json.dumps(MINIMAL, indent=2)
    p = tmp_path / "c.json"
    p.write_text(text)
    assert load_config(text).to_dict() == load_config(p).to_dict() == load_config(str(p)).to_dict()


def test_parse_error_reports_line():
    text = '{\n  "l_a": 10,\n  "grid_steps": ,\n}'
    with pytest.raises(ConfigError) as err:
        load_config(text)
    assert err.value.field.startswith("line 3")


@pytest.mark.parametrize("change,field", [
    ({"grid_steps": 99}, "grid_steps"),
    ({"n_paths": 0}, "n_paths"),
    ({"l_a": 0}, "l_a"),
    ({"seed": True}, "seed"),
    ({"hazard__initial_dist": [0.7, 0.7]}, "hazard.initial_dist"),
    ({"hazard__generator": [[-1.0, 1.0], [2.0, -1.0]]}, "hazard.generator[1]"),
    ({"claim__payoff": "digital"}, "claim.payoff"),
    ({"market__s0": "100"}, "market.s0"),
    ({"claim": None}, "claim"),
])
def test_invariant_violations_name_fields(change, field):
    with pytest.raises(ConfigError) as err:
        load_config(doc(**change))
    assert err.value.field == field


def test_term_claims_need_two_nodes():
    with pytest.raises(ConfigError) as err:
        load_config(doc(claim__contract="term", quadrature_nodes=1))
    assert err.value.field == "quadrature_nodes"
    assert load_config(doc(quadrature_nodes=1)).scenario.quadrature_nodes == 1


# --- ensembles ------------------------------------------------------------------

def test_single_path_reports_are_bitwise_reproducible(tmp_path):
    cfg = load_config(doc(n_paths=1, report={"path_csvs": 1, "oracle_paths": 1}))
    for name in ("a", "b"):
        emit_reports(run_ensemble(cfg), tmp_path / name)
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) == 5
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_constant_claim_cost_drift_is_survivor_noise():
    lam, xi = 0.1, 2.0
    d = doc(hazard={"generator": [[0.0]], "hazard_times": [0.0], "hazard_values": [[lam]], "horizon": 5.0,
                    "initial_dist": [1.0]},
            claim={"contract": "pure_endowment", "payoff": "constant", "amount": xi},
            n_paths=2000, grid_steps=500, report={"path_csvs": 0, "oracle_paths": 0})
    summary = run_ensemble(load_config(d))
    ens = summary.ensemble
    expected = xi * 10 * math.exp(-lam * 5.0)
    assert summary.stats["initial_value"] == pytest.approx(expected, rel=1e-10)
    sample = xi * (10 - ens.n_dead_T)
    assert summary.stats["cost_drift_mean"] == pytest.approx(sample.mean() - expected, abs=1e-9)
    assert within(summary.stats["cost_drift_mean"], summary.stats["cost_drift_se"], 0.0)


def test_summary_contents_and_seed_independence():
    summary = run_ensemble(load_config(doc(n_paths=2000, report={"path_csvs": 2, "oracle_paths": 2})))
    s = summary.stats
    for key in ("cost_drift_mean", "cost_drift_se", "orthogonality_cov", "orthogonality_se", "initial_value",
                "mmm_weighted_payoff_mean", "replication_error", "filter_oracle_max_tv",
                "terminal_cost_lag1_autocorr"):
        assert key in s
    assert set(s["replication_error"]) == {"max", "p50", "p95", "p99"}
    assert len(summary.oracle_tv) == 2 and s["filter_oracle_max_tv"] < 1e-3
    assert abs(s["terminal_cost_lag1_autocorr"]) < 3 * s["terminal_cost_lag1_autocorr_se"]
    assert sorted(summary.ensemble.kept) == [0, 1]


def test_death_history_matches_ensemble_paths():
    cfg = load_config(doc(n_paths=4, report={"path_csvs": 4, "oracle_paths": 0}))
    ens = run_ensemble(cfg).ensemble
    for i in range(4):
        assert np.array_equal(death_history(cfg, i).death_times, ens.kept[i].death_times)
        assert ens.kept[i].records[-1].n_dead == death_history(cfg, i).death_times.size


def test_filter_oracle_tv_below_limit():
    cfg = load_config(doc(grid_steps=2000))
    n, tv = filter_oracle_tv(cfg, 0)
    assert tv < 1e-3 and n >= 0


# --- reports --------------------------------------------------------------------

def test_report_schema_and_overwrite(tmp_path):
    cfg = load_config(doc(report={"path_csvs": 3, "oracle_paths": 2}))
    summary = run_ensemble(cfg)
    out = tmp_path / "r"
    written = emit_reports(summary, out)
    assert {p.name for p in written} >= {"summary.json", "aggregate.csv", "filter_oracle.csv", "config.json"}
    header = lambda p: next(csv.reader(open(p)))
    assert header(out / "aggregate.csv") == list(AGGREGATE_COLUMNS)
    assert header(out / "filter_oracle.csv") == list(ORACLE_COLUMNS)
    paths = sorted((out / "paths").glob("*.csv"))
    assert [p.name for p in paths] == ["path_00000.csv", "path_00001.csv", "path_00002.csv"]
    for p in paths:
        assert header(p) == list(PATH_COLUMNS)
    rows = list(csv.reader(open(out / "aggregate.csv")))
    assert len(rows) == 1 + summary.ensemble.grid.size
    assert json.loads((out / "summary.json").read_text()) == json.loads(json.dumps(summary.stats))
    assert load_config(out / "config.json").to_dict() == cfg.to_dict()

    with pytest.raises(FileExistsError):
        emit_reports(summary, out)
    emit_reports(summary, out, overwrite=True)
