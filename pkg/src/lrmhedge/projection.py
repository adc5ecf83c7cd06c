"""Survival projections for the two contract types.

Because the auxiliary survival process ``Y`` is multiplicative, the functions
``gamma(t, x, y)`` and ``k(t, x, y)`` factor as ``y * m(t, x)`` and only the
state part ``m`` is solved for.  It satisfies the backward system

    dm/dt + Q m - lambda(t, .) * m = 0,

with ``m(T, .) = 1`` for the pure endowment and ``m(u, .) = lambda(u, .)`` for
the term-insurance kernel with payment date ``u``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .filtering import H_MAX, FilterState, _n_substeps, rk4_step_matrix
from .hazard import HazardModel

PURE_ENDOWMENT = "pure_endowment"
TERM = "term"


@dataclass(frozen=True, eq=False)
class ProjectionTable:
    """Values ``m(t, x)`` on a time grid.

    Between grid rows the table is evaluated by integrating the backward
    system from the next row when ``model`` is set, and by linear
    interpolation otherwise.
    """

    grid: np.ndarray
    m: np.ndarray
    kind: str
    u: float | None = None
    model: HazardModel | None = None
    h_max: float = H_MAX

    def at(self, t) -> np.ndarray:
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < self.grid[0] - 1e-12) or np.any(t_arr > self.grid[-1] + 1e-12):
            raise ValueError(f"time outside table range [{self.grid[0]}, {self.grid[-1]}]")
        if self.model is None:
            return np.stack([np.interp(t_arr, self.grid, self.m[:, x]) for x in range(self.m.shape[1])], axis=-1)
        rows = [_row_at(self.model, self.grid, self.m, s, self.h_max) for s in t_arr.reshape(-1)]
        return np.array(rows).reshape(t_arr.shape + (self.m.shape[1],))

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", *[f"m_{x}" for x in range(self.m.shape[1])]])
            for t, row in zip(self.grid, self.m):
                w.writerow([repr(float(t)), *[repr(float(v)) for v in row]])


def _backward_sweep(model: HazardModel, grid: np.ndarray, terminal: dict[int, np.ndarray],
                    h_max: float) -> np.ndarray:
    """Solve backward along ``grid`` for several terminal conditions at once.

    ``terminal`` maps a grid index to the terminal vector imposed there; the
    returned array has shape ``(len(grid), n_terms, n_states)`` with NaN
    after each column's terminal index.
    """
    n = model.n_states
    starts = sorted(terminal)
    out = np.full((grid.size, len(starts), n), np.nan)
    cols = {idx: c for c, idx in enumerate(starts)}
    cache: dict[tuple, np.ndarray] = {}
    live = np.zeros((n, 0))
    live_cols: list[int] = []
    for i in range(grid.size - 1, -1, -1):
        if i in cols:
            live = np.column_stack([live, terminal[i]])
            live_cols.append(cols[i])
        if live_cols:
            out[i, live_cols, :] = live.T
        if i == 0:
            break
        pieces = list(model.segments(grid[i - 1], grid[i]))
        for lo, hi, lam in reversed(pieces):
            m = _n_substeps(hi - lo, h_max)
            key = (round((hi - lo) / m, 14), lam.tobytes())
            M = cache.get(key)
            if M is None:
                M = rk4_step_matrix(model.generator - np.diag(lam), (hi - lo) / m)
                cache[key] = M
            for _ in range(m):
                live = M @ live
    if not np.all(np.isfinite(out[~np.isnan(out)])):
        raise FloatingPointError("non-finite projection values; check the hazard model")
    return out


def _flow_back(model: HazardModel, lo: float, hi: float, live: np.ndarray, h_max: float) -> np.ndarray:
    """Carry solutions of the backward system from ``hi`` down to ``lo``."""
    for a, b, lam in reversed(list(model.segments(lo, hi))):
        m = _n_substeps(b - a, h_max)
        M = rk4_step_matrix(model.generator - np.diag(lam), (b - a) / m)
        for _ in range(m):
            live = M @ live
    return live


def _row_at(model: HazardModel, grid: np.ndarray, values: np.ndarray, t: float, h_max: float) -> np.ndarray:
    """``values`` at time ``t``: the grid row itself, or the next row carried back to ``t``."""
    i = min(int(np.searchsorted(grid, t, side="left")), grid.size - 1)
    if abs(grid[i] - t) <= 1e-12 * max(1.0, abs(t)) or t >= grid[i]:
        return values[i]
    return _flow_back(model, t, grid[i], values[i].T, h_max).T


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing with at least two points")
    return grid


def solve_pure_endowment(model: HazardModel, grid, h_max: float = H_MAX) -> ProjectionTable:
    """``m(t, x) = E[exp(-int_t^T lambda(s, X_s) ds) | X_t = x]`` on ``grid``."""
    grid = _check_grid(grid)
    if abs(grid[-1] - model.horizon) > 1e-12 * model.horizon:
        raise ValueError("grid must end at the model horizon")
    m = _backward_sweep(model, grid, {grid.size - 1: np.ones(model.n_states)}, h_max)[:, 0, :]
    return ProjectionTable(grid, m, PURE_ENDOWMENT, model=model, h_max=h_max)


@dataclass(frozen=True, eq=False)
class TermTables:
    """Term kernels for every quadrature node, stacked on one grid.

    ``values[i, q, x]`` is ``m_{u_q}(grid[i], x)`` (NaN where
    ``grid[i] > u_q``).
    """

    grid: np.ndarray
    nodes: np.ndarray
    values: np.ndarray
    model: HazardModel | None = None
    h_max: float = H_MAX

    def table(self, q: int) -> ProjectionTable:
        upto = np.flatnonzero(self.grid <= self.nodes[q] + 1e-12)
        return ProjectionTable(self.grid[upto], self.values[upto, q, :], TERM, float(self.nodes[q]),
                               self.model, self.h_max)

    def by_u(self) -> dict[float, ProjectionTable]:
        return {float(u): self.table(q) for q, u in enumerate(self.nodes)}

    def at(self, t: float) -> np.ndarray:
        """``(n_nodes, n_states)`` kernel values at ``t`` (NaN for nodes before ``t``)."""
        if self.model is None:
            i = int(np.searchsorted(self.grid, t, side="right")) - 1
            if i >= self.grid.size - 1:
                return self.values[-1]
            w = (t - self.grid[i]) / (self.grid[i + 1] - self.grid[i])
            return self.values[i] if w == 0.0 else (1.0 - w) * self.values[i] + w * self.values[i + 1]
        return _row_at(self.model, self.grid, self.values, t, self.h_max)


def solve_term_tables(model: HazardModel, nodes: Iterable[float], grid, h_max: float = H_MAX) -> TermTables:
    """One backward sweep producing the term kernel for every node in ``nodes``.

    Every node must be a point of ``grid``.
    """
    grid = _check_grid(grid)
    nodes = np.asarray(sorted(float(u) for u in nodes))
    terminal = {}
    for u in nodes:
        if not 0 < u <= model.horizon + 1e-12:
            raise ValueError(f"payment date {u} outside (0, T]")
        i = int(np.argmin(np.abs(grid - u)))
        if abs(grid[i] - u) > 1e-12 * max(1.0, u):
            raise ValueError(f"node {u} is not a grid point")
        terminal[i] = model.rate(u).copy()
    values = _backward_sweep(model, grid, terminal, h_max)
    return TermTables(grid, nodes, values, model, h_max)


def solve_term(model: HazardModel, u: float, grid, h_max: float = H_MAX) -> ProjectionTable:
    """``m_u(t, x) = E[lambda(u, X_u) exp(-int_t^u lambda) | X_t = x]`` for ``t <= u``."""
    grid = _check_grid(grid)
    grid = np.union1d(grid[grid <= u], [u])
    if grid.size < 2:
        grid = np.array([0.0, u])
    return solve_term_tables(model, [u], grid, h_max).table(0)


def p_hat(filter_state: FilterState, table: ProjectionTable) -> float:
    """Filtered survival probability to the horizon, ``sum_x pi(x) m(t, x)``."""
    if table.kind != PURE_ENDOWMENT:
        raise ValueError("p_hat needs a pure-endowment table")
    return float(filter_state.pi @ table.at(filter_state.time))


def B_pure(filter_state: FilterState, table: ProjectionTable, l_a: int) -> float:
    """Expected number of survivors at the horizon given the death record."""
    return (l_a - filter_state.n_dead) * p_hat(filter_state, table)


def B_term(filter_state: FilterState, table_u: ProjectionTable, l_a: int) -> float:
    """Filtered death intensity at payment date ``u``."""
    if table_u.kind != TERM:
        raise ValueError("B_term needs a term table")
    if filter_state.time > table_u.u + 1e-12:
        raise ValueError("filter time is past the payment date")
    return (l_a - filter_state.n_dead) * float(filter_state.pi @ table_u.at(filter_state.time))
