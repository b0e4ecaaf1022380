"""Least-squares Monte Carlo backward solver."""

import numpy as np
import pytest

from bsde_engine.contracts import constant_claim, default_digital_claim, expression_claim
from bsde_engine.drivers import lambda_linear, zero_driver
from bsde_engine.exceptions import ValidationError
from bsde_engine.solver import (
    BasisSpec,
    representation_values,
    solve_lsmc,
)
from bsde_engine.scenarios import IntensityModel, build_grid, simulate_paths


@pytest.fixture(scope="module")
def paths16():
    grid = build_grid(1.0, 16)
    return simulate_paths(grid, IntensityModel.constant(0.5), 32768, seed=13)


class TestBasis:
    def test_degree_bounds(self):
        with pytest.raises(ValidationError, match="degree"):
            BasisSpec(degree=0)
        with pytest.raises(ValidationError, match="ridge"):
            BasisSpec(ridge=0.0)

    def test_design_shape(self):
        phi = BasisSpec(degree=3).design(np.linspace(-1, 1, 7))
        assert phi.shape == (7, 4)
        np.testing.assert_array_equal(phi[:, 0], 1.0)


class TestSolve:
    def test_constant_claim_is_flat(self, paths16):
        sol = solve_lsmc(paths16, zero_driver(), constant_claim(0.8))
        for level in sol.y:
            np.testing.assert_allclose(level, 0.8, rtol=0, atol=1e-6)

    def test_path_count_guard(self):
        grid = build_grid(1.0, 4)
        tiny = simulate_paths(grid, IntensityModel.constant(0.5), 60, seed=1)
        with pytest.raises(ValidationError, match="margin"):
            solve_lsmc(tiny, zero_driver(), constant_claim(0.0))

    def test_linear_driver_matches_representation_on_same_paths(self, paths16):
        d = lambda_linear(0.1, -0.3, 0.2, -0.5, lambda_max=0.5)
        claim = expression_claim("min(max(w, -1), 1) + 0.3*n")
        sol = solve_lsmc(paths16, d, claim)
        vals = representation_values(paths16, d, claim)
        se = float(vals.std(ddof=1) / np.sqrt(vals.size))
        assert abs(sol.y0 - float(vals.mean())) < 3.0 * se

    def test_implicit_variant_agrees(self, paths16):
        d = lambda_linear(0.1, -0.3, 0.2, -0.5, lambda_max=0.5)
        claim = expression_claim("min(max(w, -1), 1)")
        exp = solve_lsmc(paths16, d, claim)
        imp = solve_lsmc(paths16, d, claim, implicit=True)
        assert imp.diagnostics.picard_iterations
        assert exp.diagnostics.picard_iterations == ()
        # schemes differ at O(dt); far below that at these sizes
        assert imp.y0 == pytest.approx(exp.y0, abs=5e-3)

    def test_pure_jump_digital_recursion(self):
        """Digital claim with driver gamma*k*lam reduces to a scalar alive
        recursion y <- a y + b; the solver must track its closed form."""
        gamma, lam, n = -2.0, 1.0, 50
        grid = build_grid(1.0, n)
        paths = simulate_paths(grid, IntensityModel.constant(lam), 16384, seed=7)
        d = lambda_linear(0.0, 0.0, 0.0, gamma, lambda_max=lam)
        sol = solve_lsmc(paths, d, default_digital_claim())

        dt = 1.0 / n
        q = lam * dt
        p_star = 1.0 - np.exp(-lam * dt)
        a = (1.0 - p_star) * (1.0 - gamma * q / (1.0 - q))
        b = p_star * (1.0 + gamma)
        target = b * (1.0 - a**n) / (1.0 - a)
        assert abs(sol.y0 - target) < 0.02

    def test_stored_path_budget(self, paths16):
        sol = solve_lsmc(paths16, zero_driver(), constant_claim(0.0), store_paths=256)
        assert sol.diagnostics.stored_paths == 256
        assert all(level.size == 256 for level in sol.y)

    def test_reported_se_positive(self, paths16):
        sol = solve_lsmc(paths16, zero_driver(), expression_claim("w"))
        assert sol.diagnostics.y0_se > 0


class TestPolicy:
    def test_identity_claim_unit_exposure(self, paths16):
        """xi = W_T under the zero driver has Z = 1 at every interior step."""
        sol = solve_lsmc(paths16, zero_driver(), expression_claim("w"))
        post = np.zeros(9, dtype=bool)
        for i in (4, 8, 12):
            # probe within one standard deviation of W at t_i
            sd = np.sqrt(i / 16.0)
            z, k = sol.policy.controls(i, np.linspace(-sd, sd, 9), post)
            np.testing.assert_allclose(z, 1.0, atol=0.1)
            np.testing.assert_allclose(k, 0.0, atol=0.1)

    def test_post_default_has_no_jump_exposure(self, paths16):
        sol = solve_lsmc(paths16, zero_driver(), expression_claim("w + n"))
        w_probe = np.linspace(-1.0, 1.0, 5)
        _, k = sol.policy.controls(6, w_probe, np.ones(5, dtype=bool))
        np.testing.assert_array_equal(k, 0.0)
