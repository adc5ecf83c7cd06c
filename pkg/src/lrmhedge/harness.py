"""Scenario configs, Monte Carlo ensembles and report files.

A config is a JSON document::

    {
      "hazard": {"generator": [[-1, 1], [2, -2]], "hazard_times": [0.0],
                 "hazard_values": [[0.02, 0.2]], "horizon": 5.0,
                 "initial_dist": [0.5, 0.5]},
      "market": {"s0": 100.0, "mu": 0.05, "sigma": 0.2},
      "claim": {"contract": "pure_endowment", "payoff": "call", "strike": 100.0},
      "l_a": 10, "grid_steps": 2000, "n_paths": 10000,
      "quadrature_nodes": 65, "seed": 20240601, "outputs": "out/reference"
    }

Optional ``"report": {"path_csvs": 10, "oracle_paths": 5}`` controls how
many per-path record files and filter-oracle comparisons are written.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import ValidationError
from .filtering import discrete_oracle, run_filter, total_variation
from .hazard import HazardModel, PortfolioPath, sample_chain_path, sample_lifetimes
from .hedging import HedgeEnsemble, Scenario, _path_streams, simulate_hedges
from .market import ClaimSpec, MarketModel

AGGREGATE_COLUMNS = ("time", "value_mean", "value_std", "cost_mean", "cost_std", "b_mean", "b_std", "n_dead_mean")
PATH_COLUMNS = ("path", "time", "theta", "eta", "value", "cost", "stock", "n_dead")
ORACLE_COLUMNS = ("path", "n_deaths", "max_tv")
FILTER_TV_LIMIT = 1e-3


class ConfigError(ValidationError):
    """Config document is malformed or violates an invariant."""


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    scenario: Scenario
    n_paths: int
    seed: int
    outputs: str
    path_csvs: int = 10
    oracle_paths: int = 5

    @property
    def hazard(self) -> HazardModel:
        return self.scenario.hazard

    @property
    def market(self) -> MarketModel:
        return self.scenario.market

    @property
    def claim(self) -> ClaimSpec:
        return self.scenario.claim

    @property
    def l_a(self) -> int:
        return self.scenario.l_a

    def with_overrides(self, n_paths: int | None = None, seed: int | None = None,
                       outputs: str | None = None) -> "ScenarioConfig":
        cfg = self
        if n_paths is not None:
            if n_paths < 1:
                raise ConfigError("n_paths", "must be >= 1")
            cfg = replace(cfg, n_paths=int(n_paths))
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if outputs is not None:
            cfg = replace(cfg, outputs=str(outputs))
        return cfg

    def to_dict(self) -> dict[str, Any]:
        hazard = self.hazard.to_dict()
        hazard.pop("l_a")
        return {
            "hazard": hazard,
            "market": self.market.to_dict(),
            "claim": self.claim.to_dict(),
            "l_a": self.l_a,
            "grid_steps": self.scenario.grid_steps,
            "n_paths": self.n_paths,
            "quadrature_nodes": self.scenario.quadrature_nodes,
            "seed": self.seed,
            "outputs": self.outputs,
            "report": {"path_csvs": self.path_csvs, "oracle_paths": self.oracle_paths},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _int_field(doc: Mapping[str, Any], key: str, prefix: str = "", default=None, minimum=None) -> int:
    name = f"{prefix}{key}"
    if key not in doc:
        if default is None:
            raise ConfigError(name, "missing required field")
        return default
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(name, f"must be an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(name, f"must be >= {minimum}, got {v}")
    return v


def _section(doc: Mapping[str, Any], key: str) -> Mapping[str, Any]:
    if key not in doc:
        raise ConfigError(key, "missing required section")
    if not isinstance(doc[key], Mapping):
        raise ConfigError(key, "must be an object")
    return doc[key]


def config_from_dict(doc: Mapping[str, Any]) -> ScenarioConfig:
    if not isinstance(doc, Mapping):
        raise ConfigError("<document>", "top level must be an object")
    l_a = _int_field(doc, "l_a", minimum=1)
    sections = {key: _section(doc, key) for key in ("hazard", "market", "claim")}
    try:
        hazard = HazardModel.from_dict(sections["hazard"], l_a=l_a)
    except ValidationError as exc:
        raise ConfigError(f"hazard.{exc.field}", exc.message) from None
    try:
        market = MarketModel.from_dict(sections["market"], hazard.horizon)
    except ValidationError as exc:
        raise ConfigError(f"market.{exc.field}", exc.message) from None
    try:
        claim = ClaimSpec.from_dict(sections["claim"])
    except ValidationError as exc:
        raise ConfigError(f"claim.{exc.field}", exc.message) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError("claim", f"malformed entry ({exc})") from None

    grid_steps = _int_field(doc, "grid_steps", minimum=100)
    n_paths = _int_field(doc, "n_paths", minimum=1)
    quad = _int_field(doc, "quadrature_nodes", default=65, minimum=2 if claim.contract == "term" else 1)
    seed = _int_field(doc, "seed", minimum=0)
    outputs = doc.get("outputs", "out")
    if not isinstance(outputs, str) or not outputs:
        raise ConfigError("outputs", "must be a non-empty path string")
    report = doc.get("report", {})
    if not isinstance(report, Mapping):
        raise ConfigError("report", "must be an object")
    path_csvs = _int_field(report, "path_csvs", "report.", default=10, minimum=0)
    oracle_paths = _int_field(report, "oracle_paths", "report.", default=5, minimum=0)
    scenario = Scenario(hazard, market, claim, grid_steps, quad)
    return ScenarioConfig(scenario, n_paths, seed, outputs, path_csvs, oracle_paths)


def load_config(document) -> ScenarioConfig:
    """Load and validate a config from a mapping, JSON text or a file path."""
    if isinstance(document, Mapping):
        return config_from_dict(document)
    text = str(document)
    if isinstance(document, Path) or not text.lstrip().startswith("{"):
        text = Path(document).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno} column {exc.colno}", f"parse error: {exc.msg}") from None
    return config_from_dict(doc)


# --- ensembles ------------------------------------------------------------------

def death_history(config: ScenarioConfig, index: int) -> PortfolioPath:
    """Death record of ensemble path ``index`` (same streams as the hedge run)."""
    ins, _ = _path_streams(config.seed, index)
    hz = config.hazard
    chain = sample_chain_path(hz, hz.horizon, ins)
    return sample_lifetimes(hz, chain, hz.l_a, ins)


def filter_oracle_tv(config: ScenarioConfig, index: int, step: float | None = None) -> tuple[int, float]:
    """Max total-variation gap between the ODE filter and the discrete oracle."""
    hz = config.hazard
    step = 1e-4 * hz.horizon if step is None else step
    deaths = death_history(config, index)
    grid = np.linspace(0.0, hz.horizon, config.scenario.grid_steps + 1)
    lattice = np.rint(grid / step) * step
    traj = run_filter(hz, deaths, grid)
    oracle = discrete_oracle(hz, deaths, step, record=lattice)
    ref = oracle.pi[np.searchsorted(oracle.times, lattice - 1e-12)]
    return deaths.death_times.size, float(total_variation(traj.pi_on(grid), ref).max())


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    n = x.size
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf


@dataclass(eq=False)
class EnsembleSummary:
    config: ScenarioConfig
    ensemble: HedgeEnsemble
    stats: dict[str, Any]
    oracle_tv: list[tuple[int, int, float]] = field(default_factory=list)


def summarize(ens: HedgeEnsemble) -> dict[str, Any]:
    x = ens.cost_increment
    y = ens.martingale_sum
    n = x.size
    drift, drift_se = _mean_se(x)
    prod = (x - x.mean()) * (y - y.mean())
    cov, cov_se = _mean_se(prod)
    weighted, weighted_se = _mean_se(ens.density_T * ens.payoff)
    rep = ens.replication_error
    if n > 2 and x.std() > 0:
        z = (x - x.mean()) / x.std()
        ac = float(np.mean(z[:-1] * z[1:]))
    else:
        ac = 0.0
    return {
        "n_paths": n,
        "initial_value": float(ens.initial_value.mean()),
        "cost_drift_mean": drift,
        "cost_drift_se": drift_se,
        "orthogonality_cov": cov,
        "orthogonality_se": cov_se,
        "mmm_weighted_payoff_mean": weighted,
        "mmm_weighted_payoff_se": weighted_se,
        "mean_deaths": float(ens.n_dead_T.mean()),
        "terminal_cost_lag1_autocorr": ac,
        "terminal_cost_lag1_autocorr_se": 1.0 / math.sqrt(max(n - 1, 1)),
        "replication_error": {
            "max": float(rep.max()),
            "p50": float(np.percentile(rep, 50)),
            "p95": float(np.percentile(rep, 95)),
            "p99": float(np.percentile(rep, 99)),
        },
    }


def run_ensemble(config: ScenarioConfig) -> EnsembleSummary:
    """Simulate, filter and hedge every path of ``config``; collect statistics."""
    keep = range(min(config.path_csvs, config.n_paths))
    try:
        ens = simulate_hedges(config.scenario, config.n_paths, config.seed, keep_paths=keep)
    except Exception as exc:
        raise RuntimeError(f"ensemble run failed: {exc}") from exc
    stats = summarize(ens)
    stats.update({"seed": config.seed, "contract": config.claim.contract, "payoff": config.claim.payoff,
                  "l_a": config.l_a, "grid_steps": config.scenario.grid_steps})
    tvs = []
    for i in range(min(config.oracle_paths, config.n_paths)):
        try:
            nd, tv = filter_oracle_tv(config, i)
        except Exception as exc:
            raise RuntimeError(f"filter oracle failed on path {i}: {exc}") from exc
        tvs.append((i, nd, tv))
    stats["filter_oracle_max_tv"] = max((tv for _, _, tv in tvs), default=None)
    return EnsembleSummary(config, ens, stats, tvs)


# --- reports --------------------------------------------------------------------

def _fmt(v) -> str:
    return repr(float(v))


def emit_reports(summary: EnsembleSummary, outputs, overwrite: bool = False) -> list[Path]:
    """Write ``summary.json``, ``aggregate.csv``, ``filter_oracle.csv``,
    ``config.json`` and ``paths/path_NNNNN.csv`` under ``outputs``."""
    out = Path(outputs)
    if out.exists() and any(out.iterdir()) and not overwrite:
        raise FileExistsError(f"{out} is not empty; pass overwrite to replace its contents")
    (out / "paths").mkdir(parents=True, exist_ok=True)
    if overwrite:
        for old in (out / "paths").glob("path_*.csv"):
            old.unlink()
    written = []

    p = out / "summary.json"
    p.write_text(json.dumps(summary.stats, indent=2, sort_keys=True) + "\n")
    written.append(p)

    p = out / "config.json"
    p.write_text(summary.config.to_json())
    written.append(p)

    agg = summary.ensemble.aggregates
    p = out / "aggregate.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AGGREGATE_COLUMNS)
        for row in zip(*(agg[c] for c in AGGREGATE_COLUMNS)):
            w.writerow([_fmt(v) for v in row])
    written.append(p)

    p = out / "filter_oracle.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ORACLE_COLUMNS)
        for i, nd, tv in summary.oracle_tv:
            w.writerow([i, nd, _fmt(tv)])
    written.append(p)

    for i, res in sorted(summary.ensemble.kept.items()):
        p = out / "paths" / f"path_{i:05d}.csv"
        res.to_csv(p, path_index=i)
        written.append(p)
    return written
