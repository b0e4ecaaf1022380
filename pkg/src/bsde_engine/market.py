"""Market with a savings account, a Brownian stock, and a totally
defaultable asset whose price drops to zero at the default time.

Risk premia are derived from the coefficients: theta1 = (mu1 - r) / sigma1
for the Brownian noise, and theta2 = -(mu2 - sigma2 theta1 - r) / lambda for
the jump noise while the intensity is positive (zero afterwards).  theta2 < 1
marks the unique-martingale-measure regime; theta2 <= 1 is the slope
condition the order-preservation results need for the pricing driver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .contracts import TerminalState
from .drivers import CoefficientFn, DriverSpec, coefficient_at, perfect_market_driver
from .exceptions import UnsupportedModelError, ValidationError
from .scenarios import IntensityModel, ScenarioSet, TimeGrid
from .tree import ScenarioTree

__all__ = [
    "MarketModel",
    "AssetPaths",
    "TreeAssets",
    "pricing_driver",
    "savings_account",
    "simulate_assets",
    "asset_terminals",
    "tree_assets",
]


@dataclass(frozen=True)
class MarketModel:
    """Coefficient bundle (r, mu1, sigma1, mu2, sigma2, intensity).

    Coefficients are constants or deterministic functions of time.  The
    intensity must be deterministic here: risk premia are per-time numbers.
    theta2_override substitutes a user-chosen jump risk premium, e.g. to
    place the market exactly at a regime boundary.
    """

    r: CoefficientFn
    mu1: CoefficientFn
    sigma1: CoefficientFn
    mu2: CoefficientFn
    sigma2: CoefficientFn
    intensity: IntensityModel
    s1_0: float = 1.0
    s2_0: float = 1.0
    theta2_override: CoefficientFn | None = None

    def __post_init__(self):
        if self.intensity.is_state_dependent:
            raise UnsupportedModelError(
                "market risk premia need a deterministic intensity"
            )
        for name in ("sigma1", "sigma2"):
            c = getattr(self, name)
            if not callable(c) and not float(c) > 0:
                raise ValidationError(f"{name} must be positive")
        if not (self.s1_0 > 0 and self.s2_0 > 0):
            raise ValidationError("initial asset prices must be positive")

    def sigma1_at(self, t: float) -> float:
        v = coefficient_at(self.sigma1, t)
        if not v > 0:
            raise ValidationError(f"sigma1 must stay positive, got {v:g} at t={t:g}")
        return v

    def sigma2_at(self, t: float) -> float:
        v = coefficient_at(self.sigma2, t)
        if not v > 0:
            raise ValidationError(f"sigma2 must stay positive, got {v:g} at t={t:g}")
        return v

    def theta1_at(self, t: float) -> float:
        return (coefficient_at(self.mu1, t) - coefficient_at(self.r, t)) / self.sigma1_at(t)

    def theta2_at(self, t: float) -> float:
        if self.theta2_override is not None:
            return coefficient_at(self.theta2_override, t)
        lam = self.intensity.at_time(t)
        if lam <= 0:
            return 0.0
        drift_gap = (
            coefficient_at(self.mu2, t)
            - self.sigma2_at(t) * self.theta1_at(t)
            - coefficient_at(self.r, t)
        )
        return -drift_gap / lam

    def theta2_max(self, grid: TimeGrid) -> float:
        return max(self.theta2_at(float(t)) for t in grid.nodes[:-1])

    def royer_holds(self, grid: TimeGrid) -> bool:
        """Jump risk premium at most one: the comparison slope -theta2 stays >= -1."""
        return self.theta2_max(grid) <= 1.0 + 1e-12

    def unique_measure(self, grid: TimeGrid) -> bool:
        return self.theta2_max(grid) < 1.0 - 1e-12


def pricing_driver(market: MarketModel, grid: TimeGrid) -> DriverSpec:
    """Linear driver whose backward solution is the arbitrage-free price."""
    return perfect_market_driver(
        market.r,
        market.theta1_at,
        market.theta2_at,
        lambda_max=market.intensity.lambda_max,
        times=grid.nodes,
    )


def _per_step(c: CoefficientFn, times: np.ndarray) -> np.ndarray:
    return np.array([coefficient_at(c, float(t)) for t in times])


@dataclass(frozen=True)
class AssetPaths:
    """Simulated prices at the grid nodes.

    s0 is deterministic, shape (n + 1,); s1 and s2 are per path,
    shape (count, n + 1).  s2 is exactly zero from the default step on.
    """

    grid: TimeGrid
    s0: np.ndarray
    s1: np.ndarray
    s2: np.ndarray


def savings_account(market: MarketModel, grid: TimeGrid) -> np.ndarray:
    r = _per_step(market.r, grid.nodes[:-1])
    out = np.empty(grid.n_steps + 1)
    out[0] = 1.0
    np.cumprod(np.exp(r * grid.dt), out=out[1:])
    return out


def simulate_assets(batch: ScenarioSet, market: MarketModel) -> AssetPaths:
    """Full price matrices for one batch; use asset_terminals for large runs.

    S0 and S1 follow the log-Euler scheme; S2 compounds (1 + mu2 dt
    + sigma2 dW) per surviving step and is annihilated by the default.
    """
    grid = batch.grid
    t = grid.nodes[:-1]
    dt = grid.dt
    mu1 = _per_step(market.mu1, t)
    sg1 = _per_step(market.sigma1, t)
    mu2 = _per_step(market.mu2, t)
    sg2 = _per_step(market.sigma2, t)
    _require_positive(sg1, "sigma1")
    _require_positive(sg2, "sigma2")

    n = grid.n_steps
    s1 = np.empty((batch.count, n + 1))
    s1[:, 0] = market.s1_0
    log_growth = (mu1 - 0.5 * sg1 * sg1) * dt + sg1 * batch.dw
    np.exp(np.cumsum(log_growth, axis=1), out=s1[:, 1:])
    s1[:, 1:] *= market.s1_0

    s2 = np.empty((batch.count, n + 1))
    s2[:, 0] = market.s2_0
    growth = (1.0 + mu2 * dt + sg2 * batch.dw) * (1.0 - batch.dn_matrix())
    np.cumprod(growth, axis=1, out=s2[:, 1:])
    s2[:, 1:] *= market.s2_0

    return AssetPaths(grid=grid, s0=savings_account(market, grid), s1=s1, s2=s2)


def asset_terminals(batch: ScenarioSet, market: MarketModel) -> TerminalState:
    """Terminal state with asset columns, O(count) memory."""
    grid = batch.grid
    t = grid.nodes[:-1]
    dt = grid.dt
    mu1 = _per_step(market.mu1, t)
    sg1 = _per_step(market.sigma1, t)
    mu2 = _per_step(market.mu2, t)
    sg2 = _per_step(market.sigma2, t)
    _require_positive(sg1, "sigma1")
    _require_positive(sg2, "sigma2")

    log1 = np.full(batch.count, math.log(market.s1_0))
    s2 = np.full(batch.count, market.s2_0)
    w = np.zeros(batch.count)
    for i in range(grid.n_steps):
        dwi = batch.dw[:, i]
        w += dwi
        log1 += (mu1[i] - 0.5 * sg1[i] * sg1[i]) * dt[i] + sg1[i] * dwi
        s2 *= (1.0 + mu2[i] * dt[i] + sg2[i] * dwi) * (1.0 - batch.dn_col(i))
    s0_t = savings_account(market, grid)[-1]
    return TerminalState(
        w=w,
        defaulted=batch.defaulted,
        s0=np.full(batch.count, s0_t),
        s1=np.exp(log1),
        s2=s2,
    )


@dataclass(frozen=True)
class TreeAssets:
    """Per-level asset prices on a scenario tree.

    s1 and s2 hold one array per level (aligned with the node order);
    s0 is the deterministic account at the nodes.
    """

    s0: np.ndarray
    s1: list[np.ndarray]
    s2: list[np.ndarray]

    def terminal_state(self, tree: ScenarioTree) -> TerminalState:
        leaves = tree.leaves
        return TerminalState(
            w=leaves.w,
            defaulted=~leaves.alive,
            s0=np.full(leaves.size, self.s0[-1]),
            s1=self.s1[-1],
            s2=self.s2[-1],
        )


def tree_assets(tree: ScenarioTree, market: MarketModel) -> TreeAssets:
    grid = tree.grid
    t = grid.nodes[:-1]
    dt = grid.dt
    mu1 = _per_step(market.mu1, t)
    sg1 = _per_step(market.sigma1, t)
    mu2 = _per_step(market.mu2, t)
    sg2 = _per_step(market.sigma2, t)
    _require_positive(sg1, "sigma1")
    _require_positive(sg2, "sigma2")

    s1_levels = [np.full(1, market.s1_0)]
    s2_levels = [np.full(1, market.s2_0)]
    for i in range(grid.n_steps):
        lvl = tree.levels[i]
        nxt = tree.levels[i + 1]
        parent = nxt.parent
        dw = nxt.w - lvl.w[parent]
        newly = nxt.default_step == i
        g1 = np.exp((mu1[i] - 0.5 * sg1[i] * sg1[i]) * dt[i] + sg1[i] * dw)
        s1_levels.append(s1_levels[i][parent] * g1)
        g2 = (1.0 + mu2[i] * dt[i] + sg2[i] * dw) * np.where(newly, 0.0, 1.0)
        s2_levels.append(s2_levels[i][parent] * g2)
    return TreeAssets(s0=savings_account(market, grid), s1=s1_levels, s2=s2_levels)


def _require_positive(values: np.ndarray, name: str) -> None:
    if not (values > 0).all():
        raise ValidationError(f"{name} must stay positive on the grid")
