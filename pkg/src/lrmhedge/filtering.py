"""Filter for the hidden hazard state given the cohort's death counts.

Between deaths the unnormalized mass vector obeys the linear equation

    d rho / dt = (Q^T - (l_a - n) diag(lambda(t, .))) rho,

and the filter is ``pi = rho / sum(rho)``.  At a death the filter is
reweighted by the per-state hazard.  The mass is renormalized after every
integrator step; the discarded normalization is kept in ``log_mass`` so the
unnormalized value ``exp(log_mass) * rho`` stays available.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy.linalg import expm

from .errors import FilterStepError
from .hazard import HazardModel, PortfolioPath, sample_killed_chains

H_MAX = 1e-3
NEGATIVE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class FilterState:
    time: float
    n_dead: int
    rho: np.ndarray
    log_mass: float
    pi: np.ndarray

    @classmethod
    def initial(cls, model: HazardModel, time: float = 0.0, pi=None, n_dead: int = 0) -> "FilterState":
        p = np.array(model.initial_dist if pi is None else pi, dtype=float)
        p = p / p.sum()
        return cls(float(time), int(n_dead), p.copy(), 0.0, p)

    def unnormalized(self, f=None) -> float:
        """``exp(log_mass) * rho(f)``; ``f`` defaults to the constant 1."""
        f = np.ones_like(self.rho) if f is None else np.asarray(f, dtype=float)
        return math.exp(self.log_mass) * float(self.rho @ f)


def rk4_step_matrix(A: np.ndarray, h) -> np.ndarray:
    """Classical RK4 map for ``y' = A y`` with constant ``A``.

    For a linear autonomous field the four stages collapse to the degree-4
    Taylor polynomial ``I + hA + (hA)^2/2 + (hA)^3/6 + (hA)^4/24``.  ``A`` may
    carry leading batch dimensions, with ``h`` broadcast against them.
    """
    h = np.asarray(h, dtype=float)[..., None, None]
    hA = h * A
    eye = np.broadcast_to(np.eye(A.shape[-1]), hA.shape)
    out = eye + hA / 4.0
    out = eye + (hA / 3.0) @ out
    out = eye + (hA / 2.0) @ out
    return eye + hA @ out


def filter_field(model: HazardModel, n_dead, lam: np.ndarray) -> np.ndarray:
    """Matrix of the between-death linear flow, batched over ``n_dead``."""
    alive = model.l_a - np.asarray(n_dead, dtype=float)
    return model.generator.T - alive[..., None, None] * np.diag(lam)


def _n_substeps(length: float, h_max: float) -> int:
    return max(1, math.ceil(length / h_max - 1e-9))


def propagate(state: FilterState, model: HazardModel, dt: float, h_max: float = H_MAX) -> FilterState:
    """Advance the filter over a death-free interval of length ``dt``."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    rho = state.rho
    log_mass = state.log_mass
    t0 = state.time
    for lo, hi, lam in model.segments(t0, t0 + dt):
        m = _n_substeps(hi - lo, h_max)
        M = rk4_step_matrix(filter_field(model, state.n_dead, lam), (hi - lo) / m)
        for _ in range(m):
            rho = M @ rho
            if rho.min() < -NEGATIVE_TOL:
                raise FilterStepError(f"negative filter mass {rho.min():.3e} at t={lo}; reduce h_max")
            rho = np.maximum(rho, 0.0)
            total = rho.sum()
            log_mass += math.log(total)
            rho = rho / total
    return FilterState(t0 + dt, state.n_dead, rho, log_mass, rho.copy())


def jump_update(state: FilterState, model: HazardModel) -> FilterState:
    """Reweight the filter by the per-state hazard at an observed death.

    ``log_mass`` accumulates ``log pi_{tau-}(Lambda)``, so ``exp(log_mass)``
    tracks the likelihood density of the observed death record.
    """
    if state.n_dead >= model.l_a:
        raise ValueError("no lives left: the cohort is exhausted")
    lam = model.rate(state.time)
    w = lam * state.pi
    total = w.sum()
    pi = w / total
    log_mass = state.log_mass + math.log((model.l_a - state.n_dead) * total)
    return FilterState(state.time, state.n_dead + 1, pi.copy(), log_mass, pi)


@dataclass(frozen=True, eq=False)
class FilterTrajectory:
    """Filter rows in time order; a death contributes a left and a right row."""

    times: np.ndarray
    n_dead: np.ndarray
    rho: np.ndarray
    log_mass: np.ndarray

    @property
    def pi(self) -> np.ndarray:
        return self.rho / self.rho.sum(axis=1, keepdims=True)

    @property
    def states(self) -> list[FilterState]:
        pi = self.pi
        return [FilterState(float(t), int(n), r, float(lm), p)
                for t, n, r, lm, p in zip(self.times, self.n_dead, self.rho, self.log_mass, pi)]

    @classmethod
    def from_states(cls, states: Sequence[FilterState]) -> "FilterTrajectory":
        return cls(np.array([s.time for s in states]), np.array([s.n_dead for s in states]),
                   np.array([s.rho for s in states]), np.array([s.log_mass for s in states]))

    def index(self, t: float, side: str = "right") -> int:
        """Row index at time ``t``; ``side='left'`` picks the pre-death row."""
        lo = int(np.searchsorted(self.times, t, side="left"))
        hi = int(np.searchsorted(self.times, t, side="right"))
        if lo == hi:
            raise KeyError(f"time {t} is not a trajectory row")
        return lo if side == "left" else hi - 1

    def at(self, t: float, side: str = "right") -> FilterState:
        i = self.index(t, side)
        r = self.rho[i]
        return FilterState(float(self.times[i]), int(self.n_dead[i]), r, float(self.log_mass[i]), r / r.sum())

    def pi_on(self, grid) -> np.ndarray:
        """Right-limit filter at each time of ``grid``."""
        idx = np.searchsorted(self.times, np.asarray(grid, dtype=float), side="right") - 1
        return self.pi[idx]

    def to_csv(self, path) -> None:
        n = self.rho.shape[1]
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "n_dead", *[f"pi_{i}" for i in range(n)], "log_mass"])
            for t, k, p, lm in zip(self.times, self.n_dead, self.pi, self.log_mass):
                w.writerow([repr(float(t)), int(k), *[repr(float(v)) for v in p], repr(float(lm))])


def run_filter(model: HazardModel, deaths: PortfolioPath, grid, h_max: float = H_MAX,
               initial: FilterState | None = None) -> FilterTrajectory:
    """Filter along ``grid`` with the death times of ``deaths`` inserted.

    Deaths are processed in time order; each adds a left-limit row (before
    the reweighting) and a right-limit row.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    state = initial if initial is not None else FilterState.initial(model, time=grid[0])
    if state.time != grid[0]:
        raise ValueError("initial state must sit at grid[0]")
    death_times = deaths.death_times[(deaths.death_times > grid[0]) & (deaths.death_times <= grid[-1])]

    rows = [state]
    gi, di = 1, 0
    while gi < grid.size or di < death_times.size:
        next_grid = grid[gi] if gi < grid.size else math.inf
        next_death = death_times[di] if di < death_times.size else math.inf
        t = min(next_grid, next_death)
        if t > state.time:
            state = propagate(state, model, t - state.time, h_max)
        if next_death <= next_grid:
            rows.append(state)
            state = jump_update(state, model)
            rows.append(state)
            di += 1
            if next_death == next_grid:
                gi += 1
        else:
            rows.append(state)
            gi += 1
    return FilterTrajectory.from_states(rows)


def discrete_oracle(model: HazardModel, deaths: PortfolioPath, step: float,
                    t_end: float | None = None, record=None) -> FilterTrajectory:
    """Brute-force Bayes filter on a time-discretized hidden Markov model.

    Each step of length ``step`` applies the exact chain transition
    ``exp(Q^T step)``, then the survival weight
    ``exp(-(l_a - n) lambda step)``, then a weight ``(l_a - n) lambda step``
    for every death falling in the step.  Converges to :func:`run_filter` at
    first order in ``step``.  ``record`` optionally restricts the returned
    rows to the given times (rounded to the step lattice).
    """
    t_end = model.horizon if t_end is None else t_end
    n_steps = int(round(t_end / step))
    if n_steps < 1 or abs(n_steps * step - t_end) > 1e-9 * t_end:
        raise ValueError("t_end must be a multiple of step")
    P = expm(model.generator.T * step)
    keep = np.zeros(n_steps + 1, dtype=bool)
    if record is None:
        keep[:] = True
    else:
        keep[np.rint(np.asarray(record) / step).astype(int)] = True

    pi = model.initial_dist.copy()
    n = 0
    log_mass = 0.0
    death_times = deaths.death_times
    di = 0
    tol = 1e-12 * t_end
    times, ns, rows, logs = [], [], [], []
    if keep[0]:
        times.append(0.0); ns.append(0); rows.append(pi.copy()); logs.append(0.0)
    for j in range(n_steps):
        t0 = j * step
        t1 = (j + 1) * step
        lam = model.rate(t0)
        pi = P @ pi
        pi = pi * np.exp(-(model.l_a - n) * lam * step)
        while di < death_times.size and death_times[di] <= t1 + tol:
            pi = pi * ((model.l_a - n) * lam * step)
            n += 1
            di += 1
        total = pi.sum()
        log_mass += math.log(total)
        pi = pi / total
        if keep[j + 1]:
            times.append(t1); ns.append(n); rows.append(pi.copy()); logs.append(log_mass)
    return FilterTrajectory(np.array(times), np.array(ns), np.array(rows), np.array(logs))


def total_variation(p, q) -> np.ndarray:
    return 0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum(axis=-1)


class MCEstimate(NamedTuple):
    value: float
    stderr: float


def feynman_kac_oracle(model: HazardModel, start_pi, s: float, t: float, n_dead: int, f,
                       n_samples: int, seed) -> MCEstimate:
    """Monte Carlo estimate of the unnormalized mass ``rho_t(f)``.

    Averages ``f(Z_t) exp(-(l_a - n) int_s^t lambda(r, Z_r) dr)`` over chains
    ``Z`` started at ``s`` from ``start_pi``; no death may occur in
    ``(s, t]``.
    """
    if not s < t:
        raise ValueError("need s < t")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    end, integral = sample_killed_chains(model, start_pi, s, t, n_samples, seed)
    f = np.asarray(f, dtype=float)
    x = f[end] * np.exp(-(model.l_a - n_dead) * integral)
    se = float(x.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else math.inf
    return MCEstimate(float(x.mean()), se)
