"""Hidden-state mortality model.

A cohort of ``l_a`` insured lives shares one hazard rate ``lambda(t, X_t)``
driven by a finite-state continuous-time Markov chain ``X``.  Given the
whole chain path the lifetimes are independent with conditional survival
``exp(-int_0^t lambda(s, X_s) ds)``.

The hazard is piecewise constant in time on ``hazard_times`` (the last
segment extends to infinity), so every time integral along a chain path is
evaluated in closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterator, Mapping

import numpy as np

from .errors import ValidationError

ROW_SUM_TOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class HazardModel:
    """Generator of the hidden chain plus per-state hazard table.

    Parameters
    ----------
    generator : (n, n) array_like
        Rate matrix ``Q`` (1/year); off-diagonals >= 0, rows sum to zero.
    hazard_times : (K,) array_like
        Left endpoints of the hazard segments, starting at 0.
    hazard_values : (K, n) array_like
        ``hazard_values[k, x]`` is the hazard in state ``x`` on
        ``[hazard_times[k], hazard_times[k+1])`` (1/year), strictly positive.
    horizon : float
        Contract horizon ``T`` in years.
    initial_dist : (n,) array_like
        Law of ``X_0``.
    l_a : int
        Cohort size.
    """

    generator: np.ndarray
    hazard_times: np.ndarray
    hazard_values: np.ndarray
    horizon: float
    initial_dist: np.ndarray
    l_a: int = 1

    def __post_init__(self):
        Q = np.array(self.generator, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape[0] < 1:
            raise ValidationError("generator", f"must be a square matrix, got shape {Q.shape}")
        n = Q.shape[0]
        for i in range(n):
            for j in range(n):
                if not math.isfinite(Q[i, j]):
                    raise ValidationError(f"generator[{i}][{j}]", "must be finite")
                if i != j and Q[i, j] < 0:
                    raise ValidationError(f"generator[{i}][{j}]", f"off-diagonal rate must be >= 0, got {Q[i, j]}")
            if abs(Q[i].sum()) > ROW_SUM_TOL * max(1.0, np.abs(Q[i]).max()):
                raise ValidationError(f"generator[{i}]", f"row must sum to 0 (conservative), sums to {Q[i].sum()}")

        times = np.atleast_1d(np.array(self.hazard_times, dtype=float))
        if times.ndim != 1 or times.size == 0 or times[0] != 0.0:
            raise ValidationError("hazard_times", "must be a non-empty list starting at 0")
        if np.any(np.diff(times) <= 0):
            raise ValidationError("hazard_times", "must be strictly increasing")
        values = np.array(self.hazard_values, dtype=float)
        if values.ndim == 1 and times.size == 1:
            values = values[None, :]
        if values.shape != (times.size, n):
            raise ValidationError("hazard_values", f"must have shape ({times.size}, {n}), got {values.shape}")
        for k in range(times.size):
            for x in range(n):
                v = values[k, x]
                if not (math.isfinite(v) and v > 0):
                    raise ValidationError(f"hazard_values[{k}][{x}]", f"hazard must be finite and > 0, got {v}")

        horizon = float(self.horizon)
        if not (math.isfinite(horizon) and horizon > 0):
            raise ValidationError("horizon", f"must be > 0, got {self.horizon}")
        if times[-1] >= horizon:
            raise ValidationError("hazard_times", "all segment starts must lie before the horizon")

        dist = np.atleast_1d(np.array(self.initial_dist, dtype=float))
        if dist.shape != (n,):
            raise ValidationError("initial_dist", f"must have length {n}")
        for x in range(n):
            if not (math.isfinite(dist[x]) and dist[x] >= 0):
                raise ValidationError(f"initial_dist[{x}]", f"must be >= 0, got {dist[x]}")
        if abs(dist.sum() - 1.0) > 1e-12:
            raise ValidationError("initial_dist", f"must sum to 1, sums to {dist.sum()}")

        if int(self.l_a) != self.l_a or self.l_a < 1:
            raise ValidationError("l_a", f"cohort size must be a positive integer, got {self.l_a}")

        # cumulative hazard per state at each segment start
        cum = np.zeros_like(values)
        cum[1:] = np.cumsum(values[:-1] * np.diff(times)[:, None], axis=0)

        object.__setattr__(self, "generator", _frozen(Q))
        object.__setattr__(self, "hazard_times", _frozen(times))
        object.__setattr__(self, "hazard_values", _frozen(values))
        object.__setattr__(self, "horizon", horizon)
        object.__setattr__(self, "initial_dist", _frozen(dist))
        object.__setattr__(self, "l_a", int(self.l_a))
        object.__setattr__(self, "_cum", _frozen(cum))

    @property
    def n_states(self) -> int:
        return self.generator.shape[0]

    def rate(self, t: float) -> np.ndarray:
        """Hazard vector ``lambda(t, .)`` over states (right-continuous in t)."""
        k = int(np.searchsorted(self.hazard_times, t, side="right")) - 1
        return self.hazard_values[max(k, 0)]

    def cumulative(self, t, state) -> np.ndarray:
        """``int_0^t lambda(u, state) du`` for a fixed state, vectorized."""
        t = np.asarray(t, dtype=float)
        state = np.asarray(state)
        k = np.maximum(np.searchsorted(self.hazard_times, t, side="right") - 1, 0)
        return self._cum[k, state] + self.hazard_values[k, state] * (t - self.hazard_times[k])

    def segments(self, a: float, b: float) -> Iterator[tuple[float, float, np.ndarray]]:
        """Split ``[a, b]`` at hazard breakpoints, yielding ``(start, end, lambda)``."""
        inner = self.hazard_times[(self.hazard_times > a) & (self.hazard_times < b)]
        edges = [a, *inner.tolist(), b]
        for lo, hi in zip(edges[:-1], edges[1:]):
            yield lo, hi, self.rate(lo)

    def with_cohort(self, l_a: int) -> "HazardModel":
        return HazardModel(self.generator, self.hazard_times, self.hazard_values,
                           self.horizon, self.initial_dist, l_a)

    def stationary_distribution(self) -> np.ndarray:
        n = self.n_states
        A = np.vstack([self.generator.T, np.ones(n)])
        rhs = np.zeros(n + 1)
        rhs[-1] = 1.0
        return np.linalg.lstsq(A, rhs, rcond=None)[0]

    # -- serialization -------------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        return {
            "generator": self.generator.tolist(),
            "hazard_times": self.hazard_times.tolist(),
            "hazard_values": self.hazard_values.tolist(),
            "horizon": self.horizon,
            "initial_dist": self.initial_dist.tolist(),
            "l_a": self.l_a,
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], l_a: int | None = None) -> "HazardModel":
        for key in ("generator", "hazard_values", "horizon", "initial_dist"):
            if key not in doc:
                raise ValidationError(key, "missing required field")
        times = doc.get("hazard_times", [0.0])
        cohort = l_a if l_a is not None else doc.get("l_a", 1)
        try:
            return cls(doc["generator"], times, doc["hazard_values"], doc["horizon"],
                       doc["initial_dist"], cohort)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError("hazard", f"malformed entry ({exc})") from exc


@dataclass(frozen=True, eq=False)
class ChainPath:
    """Trajectory of the hidden chain on ``[t_start, t_end]``."""

    jump_times: np.ndarray
    states: np.ndarray
    t_end: float
    t_start: float = 0.0

    def __post_init__(self):
        jt = np.asarray(self.jump_times, dtype=float)
        st = np.asarray(self.states, dtype=int)
        if st.size != jt.size + 1:
            raise ValueError("states must be one longer than jump_times")
        if jt.size and (np.any(np.diff(jt) <= 0) or jt[0] <= self.t_start or jt[-1] > self.t_end):
            raise ValueError("jump times must be strictly increasing within (t_start, t_end]")
        object.__setattr__(self, "jump_times", _frozen(jt))
        object.__setattr__(self, "states", _frozen(st))

    def state_at(self, t: float) -> int:
        return int(self.states[np.searchsorted(self.jump_times, t, side="right")])

    def sojourns(self) -> Iterator[tuple[float, float, int]]:
        edges = [self.t_start, *self.jump_times.tolist(), self.t_end]
        for lo, hi, x in zip(edges[:-1], edges[1:], self.states.tolist()):
            yield lo, hi, x


@dataclass(frozen=True, eq=False)
class PortfolioPath:
    """Death times of a cohort observed on ``[t_start, observed_until]``.

    Lives still alive at ``observed_until`` are censored: they carry no entry
    in ``death_times``.
    """

    l_a: int
    death_times: np.ndarray
    observed_until: float = math.inf
    t_start: float = 0.0

    def __post_init__(self):
        d = np.sort(np.asarray(self.death_times, dtype=float))
        if d.size > self.l_a:
            raise ValueError("more deaths than lives")
        if d.size and d[0] <= self.t_start:
            raise ValueError("death times must be after t_start")
        object.__setattr__(self, "death_times", _frozen(d))


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def sample_chain_path(model: HazardModel, t_end: float, seed, *, t_start: float = 0.0,
                      start_dist=None) -> ChainPath:
    """Simulate the hidden chain by exponential holding times.

    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator`` (which is
    then advanced in place).
    """
    if not t_end > t_start:
        raise ValueError("t_end must exceed t_start")
    rng = _rng(seed)
    Q = model.generator
    dist = model.initial_dist if start_dist is None else np.asarray(start_dist, dtype=float)
    n = model.n_states
    x = int(rng.choice(n, p=dist)) if n > 1 else 0
    rates = -np.diag(Q)
    jump_p = Q.clip(min=0.0)
    np.fill_diagonal(jump_p, 0.0)
    cum_p = np.cumsum(jump_p, axis=1)
    t = t_start
    jumps, states = [], [x]
    while True:
        rate = rates[x]
        if rate <= 0:
            break
        t += rng.exponential(1.0 / rate)
        if t > t_end:
            break
        row = cum_p[x]
        x = min(int(np.searchsorted(row, rng.random() * row[-1], side="right")), n - 1)
        jumps.append(t)
        states.append(x)
    return ChainPath(np.array(jumps), np.array(states), t_end, t_start)


def cumulative_hazard(model: HazardModel, chain: ChainPath, t) -> np.ndarray:
    """``int_{t_start}^t lambda(u, X_u) du`` along a chain path (exact)."""
    t = np.asarray(t, dtype=float)
    total = np.zeros_like(t)
    for lo, hi, x in chain.sojourns():
        clipped = np.clip(t, lo, hi)
        total += model.cumulative(clipped, x) - model.cumulative(lo, x)
    return total


def _knots(model: HazardModel, chain: ChainPath) -> np.ndarray:
    ht = model.hazard_times[(model.hazard_times > chain.t_start) & (model.hazard_times < chain.t_end)]
    return np.unique(np.concatenate([[chain.t_start], chain.jump_times, ht, [chain.t_end]]))


def sample_lifetimes(model: HazardModel, chain: ChainPath, l_a: int, seed) -> PortfolioPath:
    """Cohort lifetimes by inverse transform of the cumulative hazard.

    Each life dies at ``inf{t : C(t) >= E_i}`` with ``E_i ~ Exp(1)`` and ``C``
    the cumulative hazard along ``chain``; lives surviving past the chain's
    coverage are censored.
    """
    rng = _rng(seed)
    e = rng.exponential(size=int(l_a))
    knots = _knots(model, chain)
    ch = cumulative_hazard(model, chain, knots)
    dead = e <= ch[-1]
    times = np.interp(e[dead], ch, knots)
    return PortfolioPath(int(l_a), np.sort(times), chain.t_end, chain.t_start)


def count_process(portfolio: PortfolioPath, t: float) -> int:
    """Number of deaths in ``[0, t]`` (right-continuous)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return int(np.searchsorted(portfolio.death_times, t, side="right"))


def intensity(model: HazardModel, n_dead: int, t: float, state: int) -> float:
    """Death-count intensity ``(l_a - n_dead) * lambda(t, state)``."""
    if not 0 <= n_dead <= model.l_a:
        raise ValueError(f"n_dead must lie in [0, {model.l_a}], got {n_dead}")
    return (model.l_a - n_dead) * float(model.rate(t)[state])


def survival_factor(model: HazardModel, chain: ChainPath, s: float, t: float) -> float:
    """Pathwise survival ``exp(-int_s^{s+t} lambda(u, X_u) du)``."""
    eps = 1e-12 * max(1.0, chain.t_end)
    if s < chain.t_start - eps or t < 0 or s + t > chain.t_end + eps:
        raise ValueError(f"interval [{s}, {s + t}] outside chain coverage "
                         f"[{chain.t_start}, {chain.t_end}]")
    if t == 0:
        return 1.0
    a, b = cumulative_hazard(model, chain, np.array([s, s + t]))
    return math.exp(-(b - a))


def sample_killed_chains(model: HazardModel, start_dist, t0: float, t1: float,
                         n_samples: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized chain simulation returning end states and hazard integrals.

    Returns ``(X_{t1}, int_{t0}^{t1} lambda(u, X_u) du)`` for ``n_samples``
    independent chains started at ``t0`` from ``start_dist``.  Used by the
    Monte Carlo oracles.
    """
    rng = _rng(seed)
    Q = model.generator
    n = model.n_states
    rates = -np.diag(Q)
    jump_p = np.where(rates[:, None] > 0, Q.clip(min=0.0), 0.0)
    np.fill_diagonal(jump_p, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        jump_p = np.where(rates[:, None] > 0, jump_p / rates[:, None], 0.0)
    cum_p = np.cumsum(jump_p, axis=1)

    state = rng.choice(n, size=n_samples, p=np.asarray(start_dist, dtype=float))
    t = np.full(n_samples, float(t0))
    integral = np.zeros(n_samples)
    active = np.ones(n_samples, dtype=bool)
    while active.any():
        idx = np.flatnonzero(active)
        x = state[idx]
        r = rates[x]
        e = rng.exponential(size=idx.size)
        hold = np.full(idx.size, np.inf)
        np.divide(e, r, out=hold, where=r > 0)
        t_next = t[idx] + hold
        end = np.minimum(t_next, t1)
        integral[idx] += model.cumulative(end, x) - model.cumulative(t[idx], x)
        jumped = t_next < t1
        done = idx[~jumped]
        active[done] = False
        go = idx[jumped]
        if go.size:
            u = rng.random(go.size)
            xs = state[go]
            new = (u[:, None] >= cum_p[xs]).sum(axis=1)
            state[go] = np.minimum(new, n - 1)
            t[go] = t_next[jumped]
    return state, integral
