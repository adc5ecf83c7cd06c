"""Black-Scholes financial market in discounted units (zero riskless rate).

The minimal martingale measure is the risk-neutral measure, so claim prices
and their deltas are the usual closed forms with zero drift.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping, NamedTuple

import numpy as np
from scipy.special import ndtr

from .errors import ValidationError

PAYOFFS = ("call", "put", "identity", "constant")
TERM_PAYOFFS = ("call", "identity", "constant")
CONTRACTS = ("pure_endowment", "term")


@dataclass(frozen=True)
class MarketModel:
    s0: float
    mu: float
    sigma: float
    T: float

    def __post_init__(self):
        for name in ("s0", "mu", "sigma", "T"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(name, "must be finite")
        if self.s0 <= 0:
            raise ValidationError("s0", f"must be > 0, got {self.s0}")
        if self.sigma <= 0:
            raise ValidationError("sigma", f"must be > 0, got {self.sigma}")
        if self.T <= 0:
            raise ValidationError("T", f"must be > 0, got {self.T}")

    @property
    def market_price_of_risk(self) -> float:
        return self.mu / self.sigma

    def to_dict(self) -> dict[str, float]:
        return {"s0": self.s0, "mu": self.mu, "sigma": self.sigma}

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], T: float) -> "MarketModel":
        for key in ("s0", "mu", "sigma"):
            if key not in doc:
                raise ValidationError(key, "missing required field")
            if isinstance(doc[key], bool) or not isinstance(doc[key], (int, float)):
                raise ValidationError(key, f"must be a number, got {doc[key]!r}")
        return cls(float(doc["s0"]), float(doc["mu"]), float(doc["sigma"]), float(T))


@dataclass(frozen=True)
class ClaimSpec:
    """Financial part of the insurance claim.

    ``contract='pure_endowment'`` pays ``payoff(S_T)`` per survivor at ``T``;
    ``contract='term'`` pays ``payoff(S_t)`` at each death time ``t <= T``.
    ``amount`` is the level of a constant payoff.
    """

    contract: str
    payoff: str
    strike: float = 0.0
    amount: float = 1.0

    def __post_init__(self):
        if self.contract not in CONTRACTS:
            raise ValidationError("contract", f"must be one of {CONTRACTS}, got {self.contract!r}")
        allowed = PAYOFFS if self.contract == "pure_endowment" else TERM_PAYOFFS
        if self.payoff not in allowed:
            raise ValidationError("payoff", f"unsupported payoff {self.payoff!r} for {self.contract}")
        if not (math.isfinite(self.strike) and self.strike >= 0):
            raise ValidationError("strike", f"must be finite and >= 0, got {self.strike}")
        if not math.isfinite(self.amount):
            raise ValidationError("amount", "must be finite")

    def value(self, s):
        s = np.asarray(s, dtype=float)
        if self.payoff == "call":
            return np.maximum(s - self.strike, 0.0)
        if self.payoff == "put":
            return np.maximum(self.strike - s, 0.0)
        if self.payoff == "identity":
            return s.copy()
        return np.full_like(s, self.amount)

    def delta(self, s):
        """Derivative of the payoff in ``s`` (right derivative at the kink)."""
        s = np.asarray(s, dtype=float)
        if self.payoff == "call":
            return (s > self.strike).astype(float) if self.strike > 0 else np.ones_like(s)
        if self.payoff == "put":
            return -(s < self.strike).astype(float)
        if self.payoff == "identity":
            return np.ones_like(s)
        return np.zeros_like(s)

    def to_dict(self) -> dict[str, Any]:
        return {"contract": self.contract, "payoff": self.payoff, "strike": self.strike, "amount": self.amount}

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "ClaimSpec":
        for key in ("contract", "payoff"):
            if key not in doc:
                raise ValidationError(key, "missing required field")
        return cls(str(doc["contract"]), str(doc["payoff"]), float(doc.get("strike", 0.0)),
                   float(doc.get("amount", 1.0)))


def gbm_path(s_start: float, mu: float, sigma: float, grid, rng: np.random.Generator) -> np.ndarray:
    """Exact log-normal stepping on an arbitrary nondecreasing grid."""
    dt = np.diff(np.asarray(grid, dtype=float))
    z = rng.standard_normal(dt.size)
    incr = (mu - 0.5 * sigma**2) * dt + sigma * np.sqrt(dt) * z
    return s_start * np.exp(np.concatenate([[0.0], np.cumsum(incr)]))


def simulate_price(model: MarketModel, grid, seed) -> np.ndarray:
    """Price path ``S`` on ``grid`` (starting at 0) with ``S_0 = s0``."""
    grid = np.asarray(grid, dtype=float)
    if grid[0] != 0.0 or np.any(np.diff(grid) < 0):
        raise ValueError("grid must start at 0 and be nondecreasing")
    return gbm_path(model.s0, model.mu, model.sigma, grid, np.random.default_rng(seed))


def price_and_delta(model: MarketModel, claim: ClaimSpec, t, s, maturity):
    """Zero-rate Black-Scholes value and delta of ``claim.payoff`` paid at ``maturity``.

    Broadcasts over ``t``, ``s`` and ``maturity``.  At ``t >= maturity`` the
    payoff and its derivative are returned.
    """
    s = np.asarray(s, dtype=float)
    tau = np.asarray(maturity, dtype=float) - np.asarray(t, dtype=float)
    shape = np.broadcast(s, tau).shape
    s_b = np.broadcast_to(s, shape)
    tau_b = np.broadcast_to(tau, shape)
    k = claim.strike
    if claim.payoff == "constant":
        return np.full(shape, claim.amount), np.zeros(shape)
    if claim.payoff == "identity" or (claim.payoff == "call" and k == 0.0):
        return s_b.copy(), np.ones(shape)
    if claim.payoff == "put" and k == 0.0:
        return np.zeros(shape), np.zeros(shape)

    live = tau_b > 0
    value = np.array(claim.value(s_b), dtype=float)
    delta = np.array(claim.delta(s_b), dtype=float)
    if np.any(live):
        sl = s_b[live]
        vol = model.sigma * np.sqrt(tau_b[live])
        # a subnormal vol sends d1 to +-inf, which is the right limit
        with np.errstate(over="ignore", divide="ignore"):
            d1 = (np.log(sl / k) + 0.5 * vol * vol) / vol
        d2 = d1 - vol
        if claim.payoff == "call":
            value[live] = sl * ndtr(d1) - k * ndtr(d2)
            delta[live] = ndtr(d1)
        else:
            value[live] = k * ndtr(-d2) - sl * ndtr(-d1)
            delta[live] = ndtr(d1) - 1.0
    if shape == ():
        return float(value), float(delta)
    return value, delta


def brownian_from_path(model: MarketModel, prices, grid) -> np.ndarray:
    """Recover the driving Brownian motion ``W`` from a price path."""
    prices = np.asarray(prices, dtype=float)
    grid = np.asarray(grid, dtype=float)
    return (np.log(prices / prices[..., :1]) - (model.mu - 0.5 * model.sigma**2) * (grid - grid[0])) / model.sigma


def mmm_density(model: MarketModel, prices, grid) -> np.ndarray:
    """Density process ``L_t = exp(-(mu/sigma) W_t - (mu/sigma)^2 t / 2)`` of the MMM."""
    grid = np.asarray(grid, dtype=float)
    theta = model.market_price_of_risk
    if theta == 0.0:
        return np.ones_like(np.asarray(prices, dtype=float))
    w = brownian_from_path(model, prices, grid)
    return np.exp(-theta * w - 0.5 * theta**2 * (grid - grid[0]))


class StructureDecomposition(NamedTuple):
    martingale: np.ndarray
    drift: np.ndarray
    alpha: np.ndarray


def structure_decomposition(model: MarketModel, prices, grid) -> StructureDecomposition:
    """Split price increments into martingale and finite-variation parts.

    ``dM = sigma S_{t} dW`` (left point) and ``alpha d<M>`` with
    ``alpha = mu / (sigma^2 S)`` and ``d<M> = sigma^2 S^2 dt``; the residual
    ``dS - dM - alpha d<M>`` is of order ``dt``.
    """
    prices = np.asarray(prices, dtype=float)
    grid = np.asarray(grid, dtype=float)
    s_left = prices[..., :-1]
    dt = np.diff(grid)
    dw = np.diff(brownian_from_path(model, prices, grid), axis=-1)
    alpha = model.mu / (model.sigma**2 * prices)
    d_qv = model.sigma**2 * s_left**2 * dt
    return StructureDecomposition(model.sigma * s_left * dw, alpha[..., :-1] * d_qv, alpha)


def delta_hedge_residuals(model: MarketModel, claim: ClaimSpec, steps: int, n_paths: int, seed) -> np.ndarray:
    """Terminal error ``payoff - price_0 - sum delta dS`` of discrete delta hedging.

    Pure financial claim paid at ``model.T``; one rebalancing per grid step.
    """
    rng = np.random.default_rng(seed)
    grid = np.linspace(0.0, model.T, steps + 1)
    dt = np.diff(grid)
    z = rng.standard_normal((n_paths, steps))
    incr = (model.mu - 0.5 * model.sigma**2) * dt + model.sigma * np.sqrt(dt) * z
    s = model.s0 * np.exp(np.concatenate([np.zeros((n_paths, 1)), np.cumsum(incr, axis=1)], axis=1))
    v0, _ = price_and_delta(model, claim, 0.0, model.s0, model.T)
    _, delta = price_and_delta(model, claim, grid[None, :-1], s[:, :-1], model.T)
    gains = np.sum(delta * np.diff(s, axis=1), axis=1)
    return claim.value(s[:, -1]) - v0 - gains
