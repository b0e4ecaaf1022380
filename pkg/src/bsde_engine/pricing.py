"""Pricing operators, hedge extraction, replication, and the risk measure.

The perfect-market price is the weighted-expectation representation of the
linear pricing driver: exact summation on a tree, adjoint-reweighted Monte
Carlo on paths.  Nonlinear prices delegate to the backward solvers.  Hedges
convert the solution controls (Z, K) into asset positions and back, and the
replication simulator rolls a hedge forward through the wealth recursion to
measure the terminal shortfall.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .contracts import ClaimSpec, DividendProcess, no_dividends
from .drivers import DriverSpec, evaluate
from .exceptions import ValidationError
from .market import MarketModel, asset_terminals, pricing_driver, tree_assets
from .scenarios import IntensityModel, ScenarioSet, TimeGrid
from .solver import (
    BsdeSolution,
    RegressionPolicy,
    representation_monte_carlo,
    solve_linear_representation,
    solve_lsmc,
    solve_tree,
    terminal_values,
)
from .tree import ScenarioTree

__all__ = [
    "MonteCarloPlan",
    "PricingReport",
    "HedgePolicy",
    "HedgeStrategy",
    "ReplicationStats",
    "TreeHedgePolicy",
    "perfect_market_price",
    "price_nonlinear",
    "hedge_from_solution",
    "tree_hedge_on_grid",
    "replicate",
    "risk_measure",
]


@dataclass(frozen=True)
class MonteCarloPlan:
    """Streaming Monte Carlo request: paths are generated batch by batch
    instead of being held in memory, so count can be large."""

    grid: TimeGrid
    intensity: IntensityModel
    count: int
    seed: int
    batch: int = 65536

    def __post_init__(self):
        if self.count <= 0:
            raise ValidationError("path count must be positive")


@dataclass(frozen=True)
class PricingReport:
    """Price with its per-time curve and provenance.

    curve holds the expected value process at the grid nodes (the price
    itself at node 0).  Control curves are expectations per step; hedge
    curves are the corresponding asset positions.  se is the Monte Carlo
    standard error of the price, None for exact tree methods.
    """

    price: float
    method: str
    grid: TimeGrid
    curve: tuple[float, ...] = ()
    z_curve: tuple[float, ...] = ()
    k_curve: tuple[float, ...] = ()
    phi1_curve: tuple[float, ...] = ()
    phi2_curve: tuple[float, ...] = ()
    se: float | None = None
    seed: int | None = None
    flags: tuple[str, ...] = ()
    solution: BsdeSolution | None = field(default=None, repr=False)

    def to_csv(self, path: str) -> None:
        n = self.grid.n_steps
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "price", "Z", "K", "phi1", "phi2"])
            for i in range(len(self.curve)):
                row = [_fmt(self.grid.nodes[i]), _fmt(self.curve[i])]
                if i < n and i < len(self.z_curve):
                    row += [_fmt(self.z_curve[i]), _fmt(self.k_curve[i])]
                    if i < len(self.phi1_curve):
                        row += [_fmt(self.phi1_curve[i]), _fmt(self.phi2_curve[i])]
                    else:
                        row += ["", ""]
                else:
                    row += ["", "", "", ""]
                writer.writerow(row)

    def summary(self) -> str:
        lines = [f"method: {self.method}", f"price: {self.price:.12g}"]
        if self.se is not None:
            lines.append(f"standard error: {self.se:.6g}")
        if self.seed is not None:
            lines.append(f"seed: {self.seed}")
        lines.append(f"horizon: {self.grid.horizon:g}, steps: {self.grid.n_steps}")
        lines.extend(self.flags)
        return "\n".join(lines)


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _market_flags(market: MarketModel, grid: TimeGrid) -> tuple[str, ...]:
    t2 = market.theta2_max(grid)
    return (
        f"max jump risk premium: {t2:.6g}",
        f"unique martingale measure: {'yes' if market.unique_measure(grid) else 'no'}",
        "order-preservation slope condition: "
        + ("holds" if market.royer_holds(grid) else "violated (premium above 1)"),
    )


def tree_claim_values(tree: ScenarioTree, market: MarketModel | None, claim) -> np.ndarray:
    """Per-leaf terminal values, simulating assets on the tree when needed."""
    if isinstance(claim, ClaimSpec) and claim.uses_assets:
        if market is None:
            raise ValidationError(f"claim {claim.kind!r} needs asset prices; supply a market")
        return claim(tree_assets(tree, market).terminal_state(tree))
    return terminal_values(tree, claim)


def path_claim(market: MarketModel | None, claim):
    """Claim adapter for path backends: attaches asset columns when needed."""
    if isinstance(claim, ClaimSpec) and claim.uses_assets:
        if market is None:
            raise ValidationError(f"claim {claim.kind!r} needs asset prices; supply a market")
        return lambda batch: claim(asset_terminals(batch, market))
    return claim


def _tree_curves(tree: ScenarioTree, y_levels, z_levels=None, k_levels=None):
    curve = tuple(
        float((tree.levels[i].prob * y_levels[i]).sum()) for i in range(len(y_levels))
    )
    if z_levels is None:
        return curve, (), ()
    zc = tuple(
        float((tree.levels[i].prob * z_levels[i]).sum()) for i in range(len(z_levels))
    )
    kc = tuple(
        float((tree.levels[i].prob * k_levels[i]).sum()) for i in range(len(k_levels))
    )
    return curve, zc, kc


def perfect_market_price(
    scenario: ScenarioTree | ScenarioSet | MonteCarloPlan,
    market: MarketModel,
    claim,
    dividends: DividendProcess | None = None,
) -> PricingReport:
    """Arbitrage-free price of (claim, dividends) in the given market.

    Tree scenarios are summed exactly (the result matches the backward
    solver under the pricing driver to solver tolerance); path scenarios and
    Monte Carlo plans estimate the adjoint-weighted payout and carry a
    standard error.
    """
    dividends = no_dividends() if dividends is None else dividends
    if isinstance(scenario, ScenarioTree):
        grid = scenario.grid
        driver = pricing_driver(market, grid)
        xi = tree_claim_values(scenario, market, claim)
        rep = solve_linear_representation(scenario, driver, xi, dividends)
        curve, _, _ = _tree_curves(scenario, rep.y)
        return PricingReport(
            price=rep.y0,
            method="tree",
            grid=grid,
            curve=curve,
            flags=_market_flags(market, grid),
        )
    if isinstance(scenario, ScenarioSet):
        grid = scenario.grid
        driver = pricing_driver(market, grid)
        rep = solve_linear_representation(
            scenario, driver, path_claim(market, claim), dividends
        )
        return PricingReport(
            price=rep.y0,
            method="paths",
            grid=grid,
            curve=(rep.y0,),
            se=rep.se,
            seed=scenario.seed,
            flags=_market_flags(market, grid),
        )
    if isinstance(scenario, MonteCarloPlan):
        grid = scenario.grid
        driver = pricing_driver(market, grid)
        rep = representation_monte_carlo(
            grid,
            scenario.intensity,
            driver,
            path_claim(market, claim),
            dividends,
            count=scenario.count,
            seed=scenario.seed,
            batch=scenario.batch,
        )
        return PricingReport(
            price=rep.y0,
            method="monte_carlo",
            grid=grid,
            curve=(rep.y0,),
            se=rep.se,
            seed=scenario.seed,
            flags=_market_flags(market, grid),
        )
    raise ValidationError(f"unsupported scenario type {type(scenario).__name__}")


def price_nonlinear(
    scenario,
    market: MarketModel | None,
    driver: DriverSpec,
    claim,
    dividends: DividendProcess | None = None,
    *,
    method: str = "tree",
    **solver_kwargs,
) -> PricingReport:
    """Nonlinear price: the backward-solution value of the claim.

    method selects the backend: 'tree' (exact, needs a ScenarioTree), 'lsmc'
    (regression Monte Carlo on a ScenarioSet), or 'representation' (linear
    drivers only; tree, paths, or a streaming plan).
    """
    dividends = no_dividends() if dividends is None else dividends
    flags = ()
    if market is not None:
        flags = _market_flags(market, _grid_of(scenario))
    if method == "tree":
        if not isinstance(scenario, ScenarioTree):
            raise ValidationError("tree method needs a ScenarioTree")
        xi = tree_claim_values(scenario, market, claim)
        sol = solve_tree(scenario, driver, xi, dividends, **solver_kwargs)
        hedge = hedge_from_solution(sol, market) if market is not None else None
        curve, zc, kc = _tree_curves(scenario, sol.y, sol.z, sol.k)
        p1c = p2c = ()
        if hedge is not None:
            p1c, _, _ = _tree_curves(scenario, hedge.phi1)
            p2c, _, _ = _tree_curves(scenario, hedge.phi2)
        return PricingReport(
            price=sol.y0,
            method="tree",
            grid=scenario.grid,
            curve=curve,
            z_curve=zc,
            k_curve=kc,
            phi1_curve=p1c,
            phi2_curve=p2c,
            flags=flags,
            solution=sol,
        )
    if method == "lsmc":
        if not isinstance(scenario, ScenarioSet):
            raise ValidationError("lsmc method needs a ScenarioSet")
        sol = solve_lsmc(
            scenario, driver, path_claim(market, claim), dividends, **solver_kwargs
        )
        curve = sol.diagnostics.y_means
        zc = tuple(float(z.mean()) for z in sol.z)
        kc = tuple(float(k.mean()) for k in sol.k)
        p1c = p2c = ()
        if market is not None:
            hedge = hedge_from_solution(sol, market)
            p1c = tuple(float(p.mean()) for p in hedge.phi1)
            p2c = tuple(float(p.mean()) for p in hedge.phi2)
        return PricingReport(
            price=sol.y0,
            method="lsmc",
            grid=scenario.grid,
            curve=curve,
            z_curve=zc,
            k_curve=kc,
            phi1_curve=p1c,
            phi2_curve=p2c,
            se=sol.diagnostics.y0_se,
            seed=scenario.seed,
            flags=flags,
            solution=sol,
        )
    if method == "representation":
        if isinstance(scenario, (ScenarioTree, ScenarioSet)):
            if isinstance(scenario, ScenarioTree):
                xi = tree_claim_values(scenario, market, claim)
                rep = solve_linear_representation(scenario, driver, xi, dividends)
                curve, _, _ = _tree_curves(scenario, rep.y)
                return PricingReport(
                    price=rep.y0,
                    method="representation",
                    grid=scenario.grid,
                    curve=curve,
                    flags=flags,
                )
            rep = solve_linear_representation(
                scenario, driver, path_claim(market, claim), dividends
            )
            return PricingReport(
                price=rep.y0,
                method="representation",
                grid=scenario.grid,
                curve=(rep.y0,),
                se=rep.se,
                seed=scenario.seed,
                flags=flags,
            )
        if isinstance(scenario, MonteCarloPlan):
            rep = representation_monte_carlo(
                scenario.grid,
                scenario.intensity,
                driver,
                path_claim(market, claim),
                dividends,
                count=scenario.count,
                seed=scenario.seed,
                batch=scenario.batch,
            )
            return PricingReport(
                price=rep.y0,
                method="representation",
                grid=scenario.grid,
                curve=(rep.y0,),
                se=rep.se,
                seed=scenario.seed,
                flags=flags,
            )
        raise ValidationError(f"unsupported scenario type {type(scenario).__name__}")
    raise ValidationError(f"unknown method {method!r}; use tree, lsmc, or representation")


def _grid_of(scenario) -> TimeGrid:
    return scenario.grid


@dataclass(frozen=True)
class HedgePolicy:
    """State-feedback hedge: regression controls mapped to asset positions."""

    base: RegressionPolicy
    sigma1: tuple[float, ...]
    sigma2: tuple[float, ...]

    def zk(self, i: int, w: np.ndarray, post: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.base.controls(i, w, post)

    def phi(self, i: int, w: np.ndarray, post: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z, k = self.zk(i, w, post)
        return (z + self.sigma2[i] * k) / self.sigma1[i], -k


@dataclass(frozen=True)
class HedgeStrategy:
    """Asset positions per step: phi1 in the Brownian asset, phi2 in the
    defaultable one (zero post-default because K is).

    The arrays mirror the solution layout (tree nodes or stored paths);
    policy, when present, extends the hedge to fresh states.
    """

    grid: TimeGrid
    phi1: tuple[np.ndarray, ...]
    phi2: tuple[np.ndarray, ...]
    sigma1: tuple[float, ...]
    sigma2: tuple[float, ...]
    policy: HedgePolicy | TreeHedgePolicy | None = None

    def controls(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Back out (Z, K) = (phi1 sigma1 + phi2 sigma2, -phi2)."""
        z = self.phi1[i] * self.sigma1[i] + self.phi2[i] * self.sigma2[i]
        return z, -self.phi2[i]


def hedge_from_solution(sol: BsdeSolution, market: MarketModel) -> HedgeStrategy:
    """Change of variables from solution controls to asset positions."""
    grid = sol.grid
    s1 = tuple(market.sigma1_at(float(t)) for t in grid.nodes[:-1])
    s2 = tuple(market.sigma2_at(float(t)) for t in grid.nodes[:-1])
    phi2 = tuple(-k for k in sol.k)
    phi1 = tuple((sol.z[i] + s2[i] * sol.k[i]) / s1[i] for i in range(grid.n_steps))
    policy = None
    if isinstance(sol.policy, RegressionPolicy):
        policy = HedgePolicy(base=sol.policy, sigma1=s1, sigma2=s2)
    return HedgeStrategy(
        grid=grid, phi1=phi1, phi2=phi2, sigma1=s1, sigma2=s2, policy=policy
    )


@dataclass(frozen=True)
class TreeHedgePolicy:
    """Controls read off a tree solution as state feedback.

    Per tree step the node controls are collapsed to tables over the Brownian
    state, probability-weighted within each (state, regime) class, then
    evaluated by linear interpolation in the state and in time between
    consecutive tree steps.  Post-default states use the defaulted-node table
    (falling back to the surviving one when a level has no defaulted nodes)
    and always carry K = 0, since no jump remains to hedge.
    """

    alive: tuple[tuple[np.ndarray, np.ndarray, np.ndarray], ...]
    post: tuple[tuple[np.ndarray, np.ndarray] | None, ...]
    step: np.ndarray
    frac: np.ndarray
    sigma1: tuple[float, ...]
    sigma2: tuple[float, ...]

    def _alive_zk(self, j: int, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        grid_w, zbar, kbar = self.alive[j]
        return np.interp(w, grid_w, zbar), np.interp(w, grid_w, kbar)

    def zk(self, i: int, w: np.ndarray, post: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        j = int(self.step[i])
        z, k = self._alive_zk(j, w)
        if j + 1 < len(self.alive):
            z2, k2 = self._alive_zk(j + 1, w)
            a = float(self.frac[i])
            z = (1.0 - a) * z + a * z2
            k = (1.0 - a) * k + a * k2
        if post.any():
            z = z.copy()
            k = k.copy()
            tab = self.post[j]
            if tab is not None:
                z[post] = np.interp(w[post], tab[0], tab[1])
            k[post] = 0.0
        return z, k

    def phi(self, i: int, w: np.ndarray, post: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z, k = self.zk(i, w, post)
        return (z + self.sigma2[i] * k) / self.sigma1[i], -k


def tree_hedge_on_grid(
    sol: BsdeSolution,
    tree: ScenarioTree,
    market: MarketModel,
    grid: TimeGrid,
) -> HedgeStrategy:
    """Project a tree hedge onto a simulation grid as state feedback, for
    replay on fresh paths whose grid is finer than the tree supports.

    The returned strategy is bound to grid and carries only a policy; it has
    no per-node arrays, so it cannot be replayed on the tree itself.
    """
    if not np.array_equal(sol.grid.nodes, tree.grid.nodes):
        raise ValidationError("solution grid does not match the tree grid")
    if abs(float(grid.horizon) - float(tree.grid.horizon)) > 1e-12:
        raise ValidationError("replay grid horizon differs from the tree horizon")
    alive_tabs = []
    post_tabs = []
    for i in range(tree.n_steps):
        lvl = tree.levels[i]
        mask = lvl.alive
        alive_tabs.append(_class_table(lvl, mask, sol.z[i], sol.k[i]))
        if mask.all():
            post_tabs.append(None)
        else:
            grid_w, zbar, _ = _class_table(lvl, ~mask, sol.z[i], sol.k[i])
            post_tabs.append((grid_w, zbar))
    dt_tree = float(tree.grid.horizon) / tree.n_steps
    pos = np.asarray(grid.nodes[:-1], dtype=float) / dt_tree
    step = np.clip(np.floor(pos).astype(int), 0, tree.n_steps - 1)
    frac = np.clip(pos - step, 0.0, 1.0)
    s1 = tuple(market.sigma1_at(float(t)) for t in grid.nodes[:-1])
    s2 = tuple(market.sigma2_at(float(t)) for t in grid.nodes[:-1])
    policy = TreeHedgePolicy(
        alive=tuple(alive_tabs),
        post=tuple(post_tabs),
        step=step,
        frac=frac,
        sigma1=s1,
        sigma2=s2,
    )
    return HedgeStrategy(
        grid=grid, phi1=(), phi2=(), sigma1=s1, sigma2=s2, policy=policy
    )


def _class_table(lvl, mask: np.ndarray, z: np.ndarray, k: np.ndarray):
    """Probability-weighted control averages per Brownian state."""
    w = np.round(lvl.w[mask], 9)
    pr = lvl.prob[mask]
    grid_w, inv = np.unique(w, return_inverse=True)
    tot = np.bincount(inv, pr)
    zbar = np.bincount(inv, pr * z[mask]) / tot
    kbar = np.bincount(inv, pr * k[mask]) / tot
    return grid_w, zbar, kbar


@dataclass(frozen=True)
class ReplicationStats:
    """Distribution summary of the terminal shortfall V_T - claim."""

    count: int
    mean: float
    l2: float
    max_abs: float
    rel_l2: float


def _stats(errors: np.ndarray, weights: np.ndarray, xi: np.ndarray) -> ReplicationStats:
    mean = float((weights * errors).sum())
    l2 = math.sqrt(float((weights * errors * errors).sum()))
    denom = math.sqrt(float((weights * xi * xi).sum()))
    return ReplicationStats(
        count=errors.size,
        mean=mean,
        l2=l2,
        max_abs=float(np.abs(errors).max()),
        rel_l2=l2 / denom if denom > 0 else l2,
    )


def replicate(
    scenario: ScenarioTree | ScenarioSet,
    market: MarketModel | None,
    driver: DriverSpec,
    strategy: HedgeStrategy,
    x0: float,
    claim,
    dividends: DividendProcess | None = None,
) -> ReplicationStats:
    """Roll the wealth recursion forward under a hedge and compare with the
    claim at the horizon:

        V_{i+1} = V_i - g(t_i, V_i, Z_i, K_i) dt + Z_i dW + K_i dM - dD_i

    with (Z, K) recovered from the strategy.  On a tree the strategy arrays
    must match the node layout and every node is visited; on paths the
    strategy's policy is evaluated along each path (fresh scenarios), falling
    back to per-path arrays when shapes match.
    """
    dividends = no_dividends() if dividends is None else dividends
    grid = scenario.grid
    if not np.array_equal(grid.nodes, strategy.grid.nodes):
        raise ValidationError("strategy grid does not match the scenario grid")
    dividends.validate_on(grid)
    step_div = dividends.step_amounts(grid)
    n = grid.n_steps
    dt = grid.dt

    if isinstance(scenario, ScenarioTree):
        xi = tree_claim_values(scenario, market, claim) + dividends.terminal_jump(grid)
        v = np.full(1, float(x0))
        for i in range(n):
            lvl = scenario.levels[i]
            if i >= len(strategy.phi1) or strategy.phi1[i].shape != (lvl.size,):
                raise ValidationError("strategy arrays do not match the tree levels")
            z, k = strategy.controls(i)
            lam_nodes = np.where(lvl.alive, float(scenario.lam[i]), 0.0)
            g = evaluate(driver, float(grid.nodes[i]), v, z, k, lam_nodes)
            nxt = scenario.levels[i + 1]
            parent = nxt.parent
            dw = nxt.w - lvl.w[parent]
            dm = (nxt.default_step == i).astype(float) - (lam_nodes * dt[i])[parent]
            v = (
                v[parent]
                - (g * dt[i])[parent]
                + z[parent] * dw
                + k[parent] * dm
                - step_div[i]
            )
        errors = v - xi
        return _stats(errors, scenario.leaves.prob, xi)

    if isinstance(scenario, ScenarioSet):
        claim_fn = path_claim(market, claim)
        from .solver.representation import path_terminal_values

        xi = path_terminal_values(scenario, claim_fn) + dividends.terminal_jump(grid)
        count = scenario.count
        v = np.full(count, float(x0))
        w = np.zeros(count)
        for i in range(n):
            post = scenario.post_default_col(i)
            if strategy.policy is not None:
                z, k = strategy.policy.zk(i, w, post)
            elif strategy.phi1[i].shape == (count,):
                z, k = strategy.controls(i)
            else:
                raise ValidationError(
                    "strategy has no policy and its arrays do not match the path count"
                )
            lam = scenario.lambda_col(i)
            g = evaluate(driver, float(grid.nodes[i]), v, z, k, lam)
            v = (
                v
                - g * dt[i]
                + z * scenario.dw[:, i]
                + k * scenario.dm_col(i)
                - step_div[i]
            )
            w += scenario.dw[:, i]
        errors = v - xi
        weights = np.full(count, 1.0 / count)
        return _stats(errors, weights, xi)

    raise ValidationError(f"unsupported scenario type {type(scenario).__name__}")


def risk_measure(
    tree: ScenarioTree,
    driver: DriverSpec,
    claim,
    *,
    horizon: float | None = None,
    market: MarketModel | None = None,
) -> float:
    """Static risk of a position: minus its value at an earlier maturity,
    with no dividend stream.  horizon must hit a grid node exactly."""
    sub = tree
    if horizon is not None:
        hits = np.nonzero(np.abs(tree.grid.nodes - horizon) <= 1e-12)[0]
        if hits.size == 0:
            raise ValidationError(
                f"maturity {horizon:g} does not sit on the grid"
            )
        level = int(hits[0])
        if level == 0:
            raise ValidationError("maturity must be positive")
        sub = tree.restrict(level)
    xi = tree_claim_values(sub, market, claim)
    return -solve_tree(sub, driver, xi).y0
