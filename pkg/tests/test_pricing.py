"""Pricing, hedging and risk in the two-asset default market."""

import numpy as np
import pytest

from bsde_engine.contracts import (
    DividendProcess,
    call_claim,
    constant_claim,
    default_digital_claim,
    expression_claim,
)
from bsde_engine.drivers import zero_driver
from bsde_engine.exceptions import ValidationError
from bsde_engine.market import MarketModel, pricing_driver, tree_assets
from bsde_engine.pricing import (
    MonteCarloPlan,
    hedge_from_solution,
    perfect_market_price,
    price_nonlinear,
    replicate,
    risk_measure,
    tree_hedge_on_grid,
)
from bsde_engine.scenarios import IntensityModel, build_grid, simulate_paths
from bsde_engine.solver import solve_lsmc, solve_tree, terminal_values
from bsde_engine.tree import build_tree


@pytest.fixture(scope="module")
def market():
    return MarketModel(
        r=0.03,
        mu1=0.08,
        sigma1=0.2,
        mu2=0.05,
        sigma2=0.3,
        intensity=IntensityModel.constant(0.4),
    )


@pytest.fixture(scope="module")
def market_tree(market):
    return build_tree(build_grid(1.0, 8), market.intensity)


class TestPrice:
    def test_linearity_in_the_claim(self, market, market_tree):
        a = perfect_market_price(market_tree, market, call_claim(0.8))
        b = perfect_market_price(market_tree, market, default_digital_claim())
        assets = tree_assets(market_tree, market)
        state = assets.terminal_state(market_tree)
        combined = 2.0 * call_claim(0.8)(state) - 0.5 * default_digital_claim()(state)
        c = perfect_market_price(market_tree, market, combined)
        assert c.price == pytest.approx(2.0 * a.price - 0.5 * b.price, abs=1e-10)

    def test_representation_equals_backward_solver(self, market, market_tree):
        d = pricing_driver(market, market_tree.grid)
        rep = perfect_market_price(market_tree, market, call_claim(0.8))
        sol = price_nonlinear(market_tree, market, d, call_claim(0.8), method="tree")
        assert rep.price == pytest.approx(sol.price, abs=1e-10)

    def test_traded_asset_prices_to_its_spot(self, market):
        grid = build_grid(1.0, 64)
        plan = MonteCarloPlan(
            grid=grid, intensity=market.intensity, count=65536, seed=17
        )
        rep = perfect_market_price(plan, market, expression_claim("s1"))
        assert abs(rep.price - 1.0) < 3.0 * rep.se

    def test_plan_equals_in_memory_batch(self, market):
        grid = build_grid(1.0, 8)
        batch = simulate_paths(grid, market.intensity, 8192, seed=23)
        plan = MonteCarloPlan(
            grid=grid, intensity=market.intensity, count=8192, seed=23, batch=4096
        )
        a = perfect_market_price(batch, market, call_claim(0.9))
        b = perfect_market_price(plan, market, call_claim(0.9))
        assert a.price == pytest.approx(b.price, rel=1e-12)

    def test_zero_driver_prices_at_expectation(self, market_tree):
        claim = expression_claim("w + n")
        div = DividendProcess(rate=0.12, jumps=((0.5, 0.3),))
        rep = price_nonlinear(market_tree, None, zero_driver(), claim, div, method="tree")
        xi = terminal_values(market_tree, claim)
        expected = float((market_tree.leaves.prob * xi).sum()) + div.total(market_tree.grid)
        assert rep.price == pytest.approx(expected, abs=1e-12)

    def test_report_artifacts(self, market, market_tree, tmp_path):
        d = pricing_driver(market, market_tree.grid)
        rep = price_nonlinear(market_tree, market, d, call_claim(0.8), method="tree")
        out = tmp_path / "price.csv"
        rep.to_csv(str(out))
        assert out.read_text().splitlines()[0] == "t,price,Z,K,phi1,phi2"
        assert "price" in rep.summary()


class TestHedge:
    def test_positions_invert_controls(self, market, market_tree):
        d = pricing_driver(market, market_tree.grid)
        xi = terminal_values(
            market_tree, expression_claim("min(max(w, -1), 1) + 0.3*n")
        )
        sol = solve_tree(market_tree, d, xi)
        strat = hedge_from_solution(sol, market)
        for i in (0, 3, 7):
            z, k = strat.controls(i)
            np.testing.assert_allclose(z, sol.z[i], rtol=0, atol=1e-13)
            np.testing.assert_allclose(k, sol.k[i], rtol=0, atol=1e-13)
            np.testing.assert_allclose(strat.phi2[i], -sol.k[i], rtol=0, atol=1e-14)

    def test_tree_replication_is_exact_for_asset_claims(self, market, market_tree):
        d = pricing_driver(market, market_tree.grid)
        rep = price_nonlinear(market_tree, market, d, call_claim(0.8), method="tree")
        strat = hedge_from_solution(rep.solution, market)
        stats = replicate(
            market_tree, market, d, strat, rep.price, call_claim(0.8)
        )
        assert stats.max_abs < 1e-10
        assert stats.rel_l2 < 1e-10

    def test_path_replication_out_of_sample(self, market):
        grid = build_grid(1.0, 16)
        train = simulate_paths(grid, market.intensity, 32768, seed=31)
        d = pricing_driver(market, grid)
        rep = price_nonlinear(train, market, d, call_claim(0.8), method="lsmc")
        strat = hedge_from_solution(rep.solution, market)
        fresh = simulate_paths(grid, market.intensity, 16384, seed=32)
        stats = replicate(fresh, market, d, strat, rep.price, call_claim(0.8))
        assert stats.rel_l2 < 0.15

    def test_grid_mismatch_rejected(self, market, market_tree):
        d = pricing_driver(market, market_tree.grid)
        sol = solve_tree(market_tree, d, constant_claim(1.0))
        strat = hedge_from_solution(sol, market)
        other = build_tree(build_grid(1.0, 4), market.intensity)
        with pytest.raises(ValidationError, match="grid"):
            replicate(other, market, d, strat, 1.0, constant_claim(1.0))

    def test_tree_policy_flat_claim_replicates_exactly(self, market, market_tree):
        rep = price_nonlinear(
            market_tree, None, zero_driver(), constant_claim(2.0), method="tree"
        )
        grid = build_grid(1.0, 32)
        strat = tree_hedge_on_grid(rep.solution, market_tree, market, grid)
        fresh = simulate_paths(grid, market.intensity, 4096, seed=5)
        stats = replicate(fresh, None, zero_driver(), strat, 2.0, constant_claim(2.0))
        assert stats.max_abs < 1e-12

    def test_tree_policy_error_shrinks_with_replay_refinement(self, market, market_tree):
        d = pricing_driver(market, market_tree.grid)
        rep = price_nonlinear(market_tree, market, d, call_claim(0.8), method="tree")
        rel = {}
        for n in (64, 128):
            grid = build_grid(1.0, n)
            strat = tree_hedge_on_grid(rep.solution, market_tree, market, grid)
            fresh = simulate_paths(grid, market.intensity, 20000, seed=37)
            stats = replicate(
                fresh, market, pricing_driver(market, grid), strat, rep.price,
                call_claim(0.8),
            )
            rel[n] = stats.rel_l2
        assert rel[64] < 0.05
        assert rel[128] < rel[64]

    def test_tree_policy_kills_jump_leg_after_default(self, market, market_tree):
        d = pricing_driver(market, market_tree.grid)
        sol = solve_tree(market_tree, d, terminal_values(market_tree, expression_claim("1 - n")))
        strat = tree_hedge_on_grid(sol, market_tree, market, build_grid(1.0, 16))
        w = np.array([-0.4, 0.0, 0.7])
        post = np.array([True, False, True])
        z, k = strat.policy.zk(3, w, post)
        assert k[0] == 0.0 and k[2] == 0.0
        assert k[1] != 0.0
        assert np.all(np.isfinite(z))

    def test_tree_policy_rejects_horizon_mismatch(self, market, market_tree):
        d = pricing_driver(market, market_tree.grid)
        sol = solve_tree(market_tree, d, constant_claim(1.0))
        with pytest.raises(ValidationError, match="horizon"):
            tree_hedge_on_grid(sol, market_tree, market, build_grid(2.0, 16))

    def test_tree_policy_strategy_has_no_node_arrays(self, market, market_tree):
        d = pricing_driver(market, market_tree.grid)
        sol = solve_tree(market_tree, d, constant_claim(1.0))
        strat = tree_hedge_on_grid(sol, market_tree, market, market_tree.grid)
        with pytest.raises(ValidationError, match="tree levels"):
            replicate(market_tree, market, d, strat, 1.0, constant_claim(1.0))


class TestRiskMeasure:
    def test_negates_the_value(self, market_tree):
        assert risk_measure(market_tree, zero_driver(), constant_claim(0.4)) == pytest.approx(
            -0.4, abs=1e-12
        )

    def test_shorter_maturity_restricts_the_tree(self, market_tree):
        rho = risk_measure(
            market_tree, zero_driver(), constant_claim(0.4), horizon=0.5
        )
        assert rho == pytest.approx(-0.4, abs=1e-12)

    def test_off_grid_maturity_rejected(self, market_tree):
        with pytest.raises(ValidationError, match="grid"):
            risk_measure(market_tree, zero_driver(), constant_claim(0.4), horizon=0.3)

    def test_zero_maturity_rejected(self, market_tree):
        with pytest.raises(ValidationError, match="positive"):
            risk_measure(market_tree, zero_driver(), constant_claim(0.4), horizon=0.0)
