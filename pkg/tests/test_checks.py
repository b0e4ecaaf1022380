"""Order preservation, stability certificates and contraction traces."""

import numpy as np
import pytest

from bsde_engine.contracts import constant_claim, default_digital_claim
from bsde_engine.drivers import lambda_linear
from bsde_engine.exceptions import ValidationError
from bsde_engine.instances import (
    apriori_pair,
    comparison_pair,
    make_rng,
    picard_instance,
)
from bsde_engine.solver import (
    apriori_check,
    comparison_check,
    picard_diagnostic,
    solve_tree,
    strict_comparison_check,
)
from bsde_engine.tree import build_tree


def slope_item(report):
    return next(i for i in report.hypotheses if i.name == "jump_slope_above_minus_one")


class TestComparison:
    def test_constructed_pair_passes(self):
        rng = make_rng(101)
        inst = comparison_pair(rng, n_steps=6)
        tree = build_tree(inst.grid, inst.intensity)
        rep = comparison_check(
            tree,
            inst.driver1, inst.claim1, inst.div1,
            inst.driver2, inst.claim2, inst.div2,
        )
        assert rep.verdict == "PASS"
        assert rep.min_gap >= -1e-10
        assert rep.y1_root >= rep.y2_root - 1e-10

    def test_jump_slope_below_minus_one_breaks_order(self, tree8):
        """gamma = -2 inverts the digital's sign: larger claim, smaller value."""
        d = lambda_linear(0.0, 0.0, 0.0, -2.0, lambda_max=0.5)
        rep = comparison_check(
            tree8,
            d, default_digital_claim(), None,
            d, constant_claim(0.0), None,
        )
        assert rep.verdict == "FAIL"
        assert not slope_item(rep).passed
        assert rep.y1_root < rep.y2_root
        assert any("jump_slope" in line and "violated" in line for line in rep.trace)

    def test_violated_hypotheses_with_intact_order(self, tree8):
        d_low = lambda_linear(0.0, 0.0, 0.0, -2.0, lambda_max=0.5)
        d_high = lambda_linear(1.0, 0.0, 0.0, -2.0, lambda_max=0.5)
        rep = comparison_check(
            tree8,
            d_high, constant_claim(0.0), None,
            d_low, constant_claim(0.0), None,
        )
        assert rep.verdict == "INCONCLUSIVE"
        assert rep.min_gap >= -1e-10

    def test_report_trace_mentions_roots(self, tree8):
        d = lambda_linear(0.1, 0.0, 0.0, 0.0, lambda_max=0.5)
        rep = comparison_check(
            tree8, d, constant_claim(1.0), None, d, constant_claim(1.0), None
        )
        assert rep.trace[-1].startswith("roots:")


class TestStrictComparison:
    def test_never_touching_is_not_triggered(self, tree8):
        d = lambda_linear(0.1, -0.2, 0.1, 0.2, lambda_max=0.5)
        rep = strict_comparison_check(
            tree8,
            d, constant_claim(1.3), None,
            d, constant_claim(1.0), None,
        )
        assert rep.verdict == "NOT_TRIGGERED"

    def test_identical_instances_pass(self, tree8):
        d = lambda_linear(0.1, -0.2, 0.1, 0.2, lambda_max=0.5)
        rep = strict_comparison_check(
            tree8,
            d, constant_claim(1.0), None,
            d, constant_claim(1.0), None,
        )
        assert rep.verdict == "PASS"

    def test_boundary_slope_touches_with_different_data(self, tree8):
        """At gamma = -1 the digital prices to zero: equality at the root
        without equality of terminal data, so strictness fails."""
        d = lambda_linear(0.0, 0.0, 0.0, -1.0, lambda_max=0.5)
        rep = strict_comparison_check(
            tree8,
            d, default_digital_claim(), None,
            d, constant_claim(0.0), None,
            gamma_candidate=-1.0,
        )
        assert rep.verdict == "FAIL"
        assert abs(rep.y1_root - rep.y2_root) < 1e-12


class TestApriori:
    def test_random_pairs_certified(self):
        for seed in range(5):
            rng = make_rng(202, seed)
            inst = apriori_pair(rng, n_steps=6)
            tree = build_tree(inst.grid, inst.intensity)
            s1 = solve_tree(tree, inst.driver1, inst.claim1, inst.dividends)
            s2 = solve_tree(tree, inst.driver2, inst.claim2, inst.dividends)
            cert = apriori_check(
                tree, s1, s2, inst.driver1, inst.driver2,
                eta=inst.eta, beta=inst.beta,
            )
            assert cert.passed, f"seed {seed}: y margin {cert.y_margin}"
            assert cert.zk_rhs is not None and cert.zk_margin > 0

    def test_eta_above_limit_rejected(self, tree8):
        d = lambda_linear(0.0, 0.5, 0.5, 0.0, lambda_max=0.5)
        sol = solve_tree(tree8, d, constant_claim(1.0))
        with pytest.raises(ValidationError, match="1/C"):
            apriori_check(tree8, sol, sol, d, d, eta=100.0, beta=1000.0)

    def test_beta_below_threshold_rejected(self, tree8):
        d = lambda_linear(0.0, 0.5, 0.5, 0.0, lambda_max=0.5)
        sol = solve_tree(tree8, d, constant_claim(1.0))
        with pytest.raises(ValidationError, match="threshold"):
            apriori_check(tree8, sol, sol, d, d, eta=1.0, beta=1.0)


class TestPicard:
    def test_contraction_and_fixed_point(self):
        rng = make_rng(303)
        inst = picard_instance(rng, n_steps=6)
        tree = build_tree(inst.grid, inst.intensity)
        diag = picard_diagnostic(
            tree, inst.driver, inst.claim, inst.dividends, iterations=14
        )
        assert diag.beta == pytest.approx(
            18.0 * (inst.grid.horizon + 1.0) * inst.driver.lipschitz**2
        )
        assert min(diag.ratios) < 0.75
        assert diag.fixed_point_gap < 1e-10

    def test_needs_two_sweeps(self, tree8):
        d = lambda_linear(0.1, 0.0, 0.0, 0.0, lambda_max=0.5)
        with pytest.raises(ValidationError, match="two sweeps"):
            picard_diagnostic(tree8, d, constant_claim(1.0), iterations=1)
