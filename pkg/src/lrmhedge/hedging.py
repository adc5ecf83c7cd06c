"""Pseudo-optimal hedging of unit-linked pure endowment and term insurance.

Pure endowment (``xi`` paid per survivor at ``T``)::

    theta_t = beta_t * B_{t-},    V_t = U_t * B_t,
    B_t = (l_a - N_t) * sum_x pi_t(x) m(t, x).

Term insurance (``g(u, S_u)`` paid at each death ``u <= T``)::

    theta_t = int_t^T B_{t-}(u) beta_t(u) du,
    V_t = sum_{T_i <= t} g(T_i, S_{T_i}) + int_t^T V(u, t) B_t(u) du,
    B_t(u) = (l_a - N_t) * sum_x pi_t(x) m_u(t, x).

``U``/``V(u, t)`` are Black-Scholes prices and ``beta``/``beta(u)`` their
deltas.  The cost process is ``C_t = V_t - int_0^t theta dS`` with a
left-point sum for the stochastic integral.

The ensemble engine advances all paths together on a shared base grid and
handles deaths, which fall between grid points, path by path.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import ValidationError
from .filtering import H_MAX, NEGATIVE_TOL, FilterState, FilterStepError, filter_field, jump_update, propagate, rk4_step_matrix
from .hazard import HazardModel, sample_chain_path, sample_lifetimes
from .market import ClaimSpec, MarketModel, gbm_path, price_and_delta
from .projection import B_pure, B_term, ProjectionTable, TermTables, solve_pure_endowment, solve_term_tables

CHUNK_SIZE = 1000
_MERGE_TOL = 1e-9


def merge_times(*arrays: Iterable[float], tol: float = _MERGE_TOL) -> np.ndarray:
    """Sorted union of time arrays, collapsing points closer than ``tol``."""
    t = np.sort(np.concatenate([np.asarray(a, dtype=float).ravel() for a in arrays]))
    keep = np.concatenate([[True], np.diff(t) > tol])
    return t[keep]


def trapezoid_weights(points: np.ndarray) -> np.ndarray:
    w = np.zeros_like(points)
    d = np.diff(points)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


@dataclass(frozen=True, eq=False)
class Scenario:
    """Everything that defines a hedging problem, minus the randomness."""

    hazard: HazardModel
    market: MarketModel
    claim: ClaimSpec
    grid_steps: int = 2000
    quadrature_nodes: int = 65
    h_max: float = H_MAX

    def __post_init__(self):
        if abs(self.market.T - self.hazard.horizon) > 1e-12:
            raise ValidationError("market.T", "must equal the hazard horizon")
        if self.grid_steps < 1:
            raise ValidationError("grid_steps", "must be >= 1")
        if self.claim.contract == "term" and self.quadrature_nodes < 2:
            raise ValidationError("quadrature_nodes", "term claims need at least 2 nodes")

    @property
    def l_a(self) -> int:
        return self.hazard.l_a

    @property
    def T(self) -> float:
        return self.hazard.horizon

    @property
    def is_term(self) -> bool:
        return self.claim.contract == "term"

    @cached_property
    def nodes(self) -> np.ndarray:
        """Payment-date quadrature nodes in ``(0, T]``."""
        return np.linspace(0.0, self.T, max(self.quadrature_nodes, 2))[1:]

    @cached_property
    def grid(self) -> np.ndarray:
        parts = [np.linspace(0.0, self.T, self.grid_steps + 1), self.hazard.hazard_times]
        if self.is_term:
            parts.append(self.nodes)
        g = merge_times(*parts)
        g[-1] = self.T
        return g

    @cached_property
    def pure_table(self) -> ProjectionTable:
        return solve_pure_endowment(self.hazard, self.grid, self.h_max)

    @cached_property
    def term_tables(self) -> TermTables:
        idx = np.searchsorted(self.grid, self.nodes - _MERGE_TOL)
        return solve_term_tables(self.hazard, self.grid[idx], self.grid, self.h_max)

    @cached_property
    def node_index(self) -> np.ndarray:
        return np.searchsorted(self.grid, self.term_tables.nodes - _MERGE_TOL)


# --- single-time strategy formulas -------------------------------------------

@dataclass(frozen=True)
class MarketState:
    model: MarketModel
    stock: float


def pure_endowment_strategy(t: float, market_state: MarketState, filter_state: FilterState,
                            table: ProjectionTable, claim: ClaimSpec, l_a: int) -> float:
    """Units of stock held at ``t``; ``filter_state`` must be the left limit."""
    _, beta = price_and_delta(market_state.model, claim, t, market_state.stock, market_state.model.T)
    return beta * B_pure(filter_state, table, l_a)


def pure_endowment_value(t: float, market_state: MarketState, filter_state: FilterState,
                         table: ProjectionTable, claim: ClaimSpec, l_a: int) -> float:
    u, _ = price_and_delta(market_state.model, claim, t, market_state.stock, market_state.model.T)
    return u * B_pure(filter_state, table, l_a)


def _term_points(t: float, tables_by_u: dict[float, ProjectionTable], T: float) -> list[float]:
    if t >= T:
        return []
    nodes = [u for u in sorted(tables_by_u) if u > t]
    if len(nodes) < 1:
        raise ValueError(f"fewer than 2 quadrature nodes remain in [{t}, {T}]")
    return nodes


def _term_integrands(t, market_state, filter_state, tables_by_u, claim, l_a, model_hazard):
    nodes = _term_points(t, tables_by_u, market_state.model.T)
    if not nodes:
        return None
    s = market_state.stock
    alive = l_a - filter_state.n_dead
    b = [alive * float(filter_state.pi @ model_hazard.rate(t))]
    price = [float(claim.value(s))]
    delta = [float(claim.delta(s))]
    for u in nodes:
        b.append(B_term(filter_state, tables_by_u[u], l_a))
        v, d = price_and_delta(market_state.model, claim, t, s, u)
        price.append(v)
        delta.append(d)
    w = trapezoid_weights(np.array([t, *nodes]))
    return w, np.array(b), np.array(price), np.array(delta)


def term_strategy(t: float, market_state: MarketState, filter_state: FilterState,
                  tables_by_u: dict[float, ProjectionTable], claim: ClaimSpec, l_a: int,
                  hazard: HazardModel) -> float:
    """Trapezoid quadrature of ``B_{t-}(u) beta_t(u)`` over ``u`` in ``[t, T]``.

    The lower endpoint ``u = t`` uses the closed forms ``B_t(t) = pi_t(Lambda)``
    and ``beta_t(t) = g'(S_t)``; the other points are the nodes of
    ``tables_by_u`` after ``t``.
    """
    parts = _term_integrands(t, market_state, filter_state, tables_by_u, claim, l_a, hazard)
    if parts is None:
        return 0.0
    w, b, _, delta = parts
    return float(np.sum(w * b * delta))


def term_value(t: float, market_state: MarketState, payouts: Iterable[tuple[float, float]],
               filter_state: FilterState, tables_by_u: dict[float, ProjectionTable], claim: ClaimSpec,
               l_a: int, hazard: HazardModel) -> float:
    """Realized payouts ``sum g(T_i, S_{T_i})`` plus the prospective integral.

    ``payouts`` lists ``(death_time, stock_at_death)`` for deaths up to ``t``.
    """
    realized = sum(float(claim.value(s)) for tau, s in payouts if tau <= t)
    parts = _term_integrands(t, market_state, filter_state, tables_by_u, claim, l_a, hazard)
    if parts is None:
        return realized
    w, b, price, _ = parts
    return realized + float(np.sum(w * b * price))


# --- records ----------------------------------------------------------------

@dataclass(frozen=True)
class HedgeRecord:
    time: float
    theta: float
    eta: float
    value: float
    cost: float
    stock: float
    n_dead: int


RECORD_COLUMNS = ("time", "theta", "eta", "value", "cost", "stock", "n_dead")


@dataclass(eq=False)
class ScenarioResult:
    records: list[HedgeRecord]
    payoff: float
    terminal_cost: float
    integral_theta_dS: float
    death_times: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def cost_increment(self) -> float:
        """``C_T - C_0``, the reconstructed orthogonal martingale at ``T``."""
        return self.terminal_cost - self.records[0].cost

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self, path, path_index: int | None = None) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            head = (["path"] if path_index is not None else []) + list(RECORD_COLUMNS)
            w.writerow(head)
            for r in self.records:
                row = [repr(float(getattr(r, c))) if c != "n_dead" else r.n_dead for c in RECORD_COLUMNS]
                w.writerow(([path_index] if path_index is not None else []) + row)


class Checkpoint(NamedTuple):
    """Observable state from which futures are resimulated."""

    time: float
    stock: float
    n_dead: int
    pi: np.ndarray
    paid: float = 0.0


@dataclass(eq=False)
class HedgeEnsemble:
    """Per-path summaries plus per-time aggregates of an ensemble run."""

    scenario: Scenario
    start: Checkpoint
    grid: np.ndarray
    initial_value: np.ndarray
    terminal_value: np.ndarray
    terminal_cost: np.ndarray
    payoff: np.ndarray
    gains: np.ndarray
    martingale_sum: np.ndarray
    n_dead_T: np.ndarray
    density_T: np.ndarray
    aggregates: dict[str, np.ndarray]
    kept: dict[int, ScenarioResult]

    @property
    def n_paths(self) -> int:
        return self.initial_value.size

    @property
    def cost_increment(self) -> np.ndarray:
        """``C_T - C_{t0}`` per path (``C_{t0} = V_{t0}``)."""
        return self.terminal_cost - self.initial_value

    @property
    def replication_error(self) -> np.ndarray:
        return np.abs(self.terminal_value - self.payoff)


# --- ensemble engine ----------------------------------------------------------

class _Evaluator:
    """Vectorized strategy/value evaluation at one time for many paths."""

    def __init__(self, sc: Scenario):
        self.sc = sc
        self.claim = sc.claim
        self.market = sc.market
        self.table = sc.pure_table
        if sc.is_term:
            self.term = sc.term_tables
            self.node_index = sc.node_index

    def survivors(self, t: float, k: int | None, pi: np.ndarray, n: np.ndarray) -> np.ndarray:
        m = self.table.m[k] if k is not None else self.table.at(t)
        return (self.sc.l_a - n) * np.sum(pi * m, axis=-1)

    def _bs(self, S: np.ndarray, tau: np.ndarray):
        c = self.claim
        if c.payoff == "constant":
            shape = (S.size, tau.size)
            return np.full(shape, c.amount), np.zeros(shape)
        if c.payoff == "identity" or c.strike == 0.0:
            return np.repeat(S[:, None], tau.size, axis=1), np.ones((S.size, tau.size))
        vol = self.market.sigma * np.sqrt(tau)
        d1 = (np.log(S / c.strike)[:, None] + 0.5 * vol * vol) / vol
        n1 = ndtr(d1)
        n2 = ndtr(d1 - vol)
        return S[:, None] * n1 - c.strike * n2, n1

    def evaluate(self, t: float, k: int | None, S: np.ndarray, pi_l: np.ndarray, n_l: np.ndarray,
                 pi_r: np.ndarray, n_r: np.ndarray, paid: np.ndarray):
        """Return ``(theta, value)``; ``theta`` uses the left-limit filter."""
        sc = self.sc
        if not sc.is_term:
            value_u, beta = price_and_delta(self.market, self.claim, t, S, sc.T)
            b_l = self.survivors(t, k, pi_l, n_l)
            b_r = b_l if pi_r is pi_l else self.survivors(t, k, pi_r, n_r)
            return beta * b_l, value_u * b_r

        if k is not None:
            rem = self.node_index > k
            kern = self.term.values[k, rem, :]
        else:
            rem = self.term.nodes > t
            kern = self.term.at(t)[rem]
        u = self.term.nodes[rem]
        if u.size == 0:
            return np.zeros_like(S), paid.copy()
        lam = sc.hazard.rate(t)
        w = trapezoid_weights(np.concatenate([[t], u]))
        price, delta = self._bs(S, u - t)
        g_now = self.claim.value(S)
        dg_now = self.claim.delta(S)

        def kernel(pi, n):
            alive = (sc.l_a - n)
            # explicit state loop keeps each path's arithmetic independent of the batch size
            acc = pi[:, :1] * kern[None, :, 0]
            for x in range(1, pi.shape[1]):
                acc = acc + pi[:, x:x + 1] * kern[None, :, x]
            return alive * np.sum(pi * lam, axis=-1), alive[:, None] * acc

        b0_l, bu_l = kernel(pi_l, n_l)
        if pi_r is pi_l:
            b0_r, bu_r = b0_l, bu_l
        else:
            b0_r, bu_r = kernel(pi_r, n_r)
        theta = w[0] * b0_l * dg_now + np.sum(bu_l * delta * w[1:], axis=-1)
        value = paid + w[0] * b0_r * g_now + np.sum(bu_r * price * w[1:], axis=-1)
        return theta, value


def _path_streams(seed: int, index: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Insurance and market generators of path ``index``.

    Splitting rule: ``SeedSequence(seed, spawn_key=(index,)).spawn(2)``, so a
    path's randomness depends only on the master seed and its index.
    """
    ins, mkt = np.random.SeedSequence(seed, spawn_key=(index,)).spawn(2)
    return np.random.default_rng(ins), np.random.default_rng(mkt)


def _start_grid(sc: Scenario, t0: float) -> tuple[np.ndarray, np.ndarray]:
    full = sc.grid
    if t0 <= 0.0:
        return full.copy(), np.arange(full.size)
    after = np.flatnonzero(full > t0 + _MERGE_TOL)
    on = np.flatnonzero(np.abs(full - t0) <= _MERGE_TOL)
    if on.size:
        idx = np.concatenate([on[:1], after])
    else:
        idx = np.concatenate([[-1], after])
    grid = np.concatenate([[t0], full[after]])
    return grid, idx


def _run_chunk(sc: Scenario, start: Checkpoint, path_ids: Sequence[int], seed: int, keep: set[int],
               grid: np.ndarray, full_idx: np.ndarray, ev: _Evaluator):
    hz, mk, claim = sc.hazard, sc.market, sc.claim
    l_a, T, t0 = sc.l_a, sc.T, float(start.time)
    P = len(path_ids)
    G = grid.size
    n0 = int(start.n_dead)

    S = np.empty((P, G))
    deaths_by_cell: dict[int, list[tuple[int, np.ndarray, np.ndarray]]] = {}
    mart = np.empty(P)
    payoff = np.empty(P)
    n_deaths = np.empty(P, dtype=int)
    death_lists = []
    for j, i in enumerate(path_ids):
        ins, mkt = _path_streams(seed, i)
        if n0 < l_a:
            chain = sample_chain_path(hz, T, ins, t_start=t0, start_dist=start.pi)
            d = sample_lifetimes(hz, chain, l_a - n0, ins).death_times
        else:
            d = np.zeros(0)
        times = np.concatenate([grid, d])
        flag = np.concatenate([np.zeros(G, dtype=bool), np.ones(d.size, dtype=bool)])
        order = np.argsort(times, kind="stable")
        times, flag = times[order], flag[order]
        s_full = gbm_path(start.stock, mk.mu, mk.sigma, times, mkt)
        # martingale part sigma S_{t-} dW, with dW recovered from the log-increments
        dlog = np.diff(np.log(s_full))
        dw = (dlog - (mk.mu - 0.5 * mk.sigma**2) * np.diff(times)) / mk.sigma
        mart[j] = float(np.sum(mk.sigma * s_full[:-1] * dw))
        S[j] = s_full[~flag]
        s_d = s_full[flag]
        death_lists.append((d, s_d))
        n_deaths[j] = d.size
        if claim.contract == "pure_endowment":
            payoff[j] = float(claim.value(s_full[-1])) * (l_a - n0 - d.size)
        else:
            payoff[j] = start.paid + float(np.sum(claim.value(s_d)))
        if d.size:
            cells = np.searchsorted(grid, d, side="left") - 1
            for c in np.unique(cells):
                sel = cells == c
                deaths_by_cell.setdefault(int(c), []).append((j, d[sel], s_d[sel]))

    keep_rows = [j for j, i in enumerate(path_ids) if i in keep]
    rec = {name: np.empty((len(keep_rows), G)) for name in ("theta", "value", "cost", "n_dead")}
    extra: dict[int, list[HedgeRecord]] = {j: [] for j in keep_rows}

    rho = np.tile(np.asarray(start.pi, dtype=float) / np.sum(start.pi), (P, 1))
    n = np.full(P, n0, dtype=float)
    logm = np.zeros(P)
    gains = np.zeros(P)
    paid = np.full(P, float(start.paid))
    agg = {key: np.zeros(G) for key in ("value", "value_sq", "cost", "cost_sq", "b", "b_sq", "n_dead")}

    def k_of(col):
        k = int(full_idx[col])
        return k if k >= 0 else None

    # sums are taken around the common starting values to avoid cancellation in the variance
    shift: dict[str, float] = {}

    def record(col, theta, value):
        cost = value - gains
        b = ev.survivors(grid[col], k_of(col), rho, n)
        for key, x in (("value", value), ("cost", cost), ("b", b)):
            if key not in shift:
                shift[key] = float(x[0])
            y = x - shift[key]
            agg[key][col] = y.sum(); agg[f"{key}_sq"][col] = (y**2).sum()
        agg["n_dead"][col] = n.sum()
        for r, j in enumerate(keep_rows):
            rec["theta"][r, col] = theta[j]; rec["value"][r, col] = value[j]
            rec["cost"][r, col] = cost[j]; rec["n_dead"][r, col] = n[j]
        return cost

    theta, value = ev.evaluate(grid[0], k_of(0), S[:, 0], rho, n, rho, n, paid)
    initial_value = value.copy()
    cost = record(0, theta, value)

    step_cache: dict[tuple, np.ndarray] = {}
    n_levels = np.arange(l_a + 1)
    for col in range(G - 1):
        t_lo, t_hi = grid[col], grid[col + 1]
        h = t_hi - t_lo
        lam = hz.rate(t_lo)
        m = max(1, math.ceil(h / sc.h_max - 1e-9))
        key = (round(h / m, 14), lam.tobytes())
        M_all = step_cache.get(key)
        if M_all is None:
            M_all = rk4_step_matrix(filter_field(hz, n_levels, lam), h / m)
            step_cache[key] = M_all
        slow = deaths_by_cell.get(col, [])
        fast = np.ones(P, dtype=bool)
        for j, _, _ in slow:
            fast[j] = False
        Mp = M_all[n[fast].astype(int)]
        r = rho[fast]
        lm = logm[fast]
        for _ in range(m):
            r = np.sum(Mp * r[:, None, :], axis=-1)
            if r.size and r.min() < -NEGATIVE_TOL:
                raise FilterStepError(f"negative filter mass at t={t_lo}")
            r = np.maximum(r, 0.0)
            tot = r.sum(axis=1)
            lm = lm + np.log(tot)
            r = r / tot[:, None]
        rho[fast] = r
        logm[fast] = lm
        gains[fast] += theta[fast] * (S[fast, col + 1] - S[fast, col])

        for j, taus, s_taus in slow:
            st = FilterState(t_lo, int(n[j]), rho[j].copy(), float(logm[j]), rho[j].copy())
            s_cur, th = S[j, col], theta[j]
            for tau, s_tau in zip(taus, s_taus):
                if tau > st.time:
                    st = propagate(st, hz, tau - st.time, sc.h_max)
                gains[j] += th * (s_tau - s_cur)
                s_cur = s_tau
                left = st
                st = jump_update(st, hz)
                if sc.is_term:
                    paid[j] += float(claim.value(s_tau))
                # holdings after tau already see the death; the record at tau keeps the
                # predictable (pre-death) units
                s_arr = np.array([s_tau])
                pi_r, n_r = st.pi[None, :], np.array([float(st.n_dead)])
                th_a, val_a = ev.evaluate(tau, None, s_arr, pi_r, n_r, pi_r, n_r, paid[j:j + 1])
                th = float(th_a[0])
                if j in extra:
                    th_pre, _ = ev.evaluate(tau, None, s_arr, left.pi[None, :], np.array([float(left.n_dead)]),
                                            pi_r, n_r, paid[j:j + 1])
                    th_pre, val = float(th_pre[0]), float(val_a[0])
                    extra[j].append(HedgeRecord(float(tau), th_pre, val - th_pre * s_tau, val, val - gains[j],
                                                float(s_tau), st.n_dead))
            if t_hi > st.time:
                st = propagate(st, hz, t_hi - st.time, sc.h_max)
            gains[j] += th * (S[j, col + 1] - s_cur)
            rho[j] = st.rho
            n[j] = st.n_dead
            logm[j] = st.log_mass

        theta, value = ev.evaluate(t_hi, k_of(col + 1), S[:, col + 1], rho, n, rho, n, paid)
        cost = record(col + 1, theta, value)

    w_T = (np.log(S[:, -1] / start.stock) - (mk.mu - 0.5 * mk.sigma**2) * (T - t0)) / mk.sigma
    lam_mpr = mk.market_price_of_risk
    density = np.exp(-lam_mpr * w_T - 0.5 * lam_mpr**2 * (T - t0))

    kept = {}
    for r, j in enumerate(keep_rows):
        rows = []
        for col in range(G):
            th = rec["theta"][r, col]; val = rec["value"][r, col]; s = S[j, col]
            rows.append(HedgeRecord(float(grid[col]), float(th), float(val - th * s), float(val),
                                    float(rec["cost"][r, col]), float(s), int(rec["n_dead"][r, col])))
        rows.extend(extra[j])
        rows.sort(key=lambda x: x.time)
        kept[path_ids[j]] = ScenarioResult(rows, float(payoff[j]), float(cost[j]), float(value[j] - cost[j]),
                                           death_lists[j][0])
    out = dict(initial_value=initial_value, terminal_value=value, terminal_cost=cost, payoff=payoff,
               gains=gains, martingale_sum=mart, n_dead_T=n.astype(int), density_T=density)
    agg.update({f"{key}_shift": v for key, v in shift.items()})
    return out, agg, kept


def simulate_hedges(scenario: Scenario, n_paths: int, seed: int, *, start: Checkpoint | None = None,
                    keep_paths: Iterable[int] = (), chunk_size: int = CHUNK_SIZE) -> HedgeEnsemble:
    """Simulate ``n_paths`` independent scenarios and hedge each one.

    Path ``i`` draws its randomness from :func:`_path_streams` ``(seed, i)``,
    so results do not depend on ``chunk_size``.  Full records are kept for
    the path indices in ``keep_paths``.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    sc = scenario
    if start is None:
        start = Checkpoint(0.0, sc.market.s0, 0, sc.hazard.initial_dist.copy(), 0.0)
    if not 0.0 <= start.time <= sc.T:
        raise ValueError("checkpoint time outside [0, T]")
    grid, full_idx = _start_grid(sc, float(start.time))
    ev = _Evaluator(sc)
    keep = set(int(i) for i in keep_paths)

    per_path: dict[str, list[np.ndarray]] = {}
    agg_total: dict[str, np.ndarray] = {}
    kept: dict[int, ScenarioResult] = {}
    for lo in range(0, n_paths, chunk_size):
        ids = list(range(lo, min(lo + chunk_size, n_paths)))
        try:
            out, agg, kp = _run_chunk(sc, start, ids, seed, keep, grid, full_idx, ev)
        except (ArithmeticError, ValueError, FilterStepError) as exc:
            raise PathError(ids[0], ids[-1], exc) from exc
        for key, val in out.items():
            per_path.setdefault(key, []).append(val)
        for key, val in agg.items():
            if key.endswith("_shift"):
                agg_total[key] = val
            else:
                agg_total[key] = agg_total.get(key, 0.0) + val
        kept.update(kp)
    arrays = {key: np.concatenate(v) for key, v in per_path.items()}
    N = float(n_paths)
    aggregates = {"time": grid}
    for key in ("value", "cost", "b"):
        centered = agg_total[key] / N
        var = np.maximum(agg_total[f"{key}_sq"] / N - centered**2, 0.0)
        aggregates[f"{key}_mean"] = agg_total[f"{key}_shift"] + centered
        aggregates[f"{key}_std"] = np.sqrt(var)
    aggregates["n_dead_mean"] = agg_total["n_dead"] / N
    return HedgeEnsemble(sc, start, grid, arrays["initial_value"], arrays["terminal_value"],
                         arrays["terminal_cost"], arrays["payoff"], arrays["gains"], arrays["martingale_sum"],
                         arrays["n_dead_T"], arrays["density_T"], aggregates, kept)


def run_hedge(scenario: Scenario, seed: int, path_index: int = 0) -> ScenarioResult:
    """Hedge one simulated scenario and return its full record path."""
    ens = simulate_hedges(scenario, path_index + 1, seed, keep_paths=[path_index],
                          chunk_size=path_index + 1)
    return ens.kept[path_index]


class PathError(RuntimeError):
    """A failure inside the batch of paths ``first..last``."""

    def __init__(self, first: int, last: int, cause: Exception):
        self.first, self.last, self.cause = first, last, cause
        super().__init__(f"paths {first}..{last}: {type(cause).__name__}: {cause}")


class RiskEstimate(NamedTuple):
    time: float
    value: float
    stderr: float


def risk_process_estimate(scenario: Scenario, checkpoints: Sequence[Checkpoint], n_paths: int,
                          seed: int) -> list[RiskEstimate]:
    """Conditional Monte Carlo estimate of ``E[(C_T - C_t)^2 | observed state at t]``.

    Futures are resimulated from each checkpoint: the hidden state is drawn
    from the checkpoint's filter, surviving lives and the stock restart from
    the checkpoint values.
    """
    if n_paths < 1000:
        raise ValueError("risk estimates need n_paths >= 1000 per checkpoint")
    out = []
    for c, cp in enumerate(checkpoints):
        if cp.time >= scenario.T:
            out.append(RiskEstimate(float(cp.time), 0.0, 0.0))
            continue
        ens = simulate_hedges(scenario, n_paths, seed + 7919 * c, start=cp)
        sq = ens.cost_increment**2
        out.append(RiskEstimate(float(cp.time), float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(n_paths))))
    return out
