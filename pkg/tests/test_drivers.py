"""Driver families: evaluation, structure validation, Lipschitz reporting."""

import numpy as np
import pytest

from bsde_engine import (
    ValidationError,
    custom_driver,
    evaluate,
    expression_driver,
    lambda_linear,
    large_investor_driver,
    perfect_market_driver,
    verify_admissibility,
    zero_driver,
)


class TestLambdaLinear:
    def test_pointwise_formula(self):
        d = lambda_linear(0.5, -0.2, 0.3, 0.7, lambda_max=2.0)
        y, z, k, lam = 1.0, 2.0, 3.0, 1.5
        expected = 0.5 - 0.2 * y + 0.3 * z + 0.7 * k * lam
        assert evaluate(d, 0.1, y, z, k, lam) == pytest.approx(expected)

    def test_time_dependent_coefficients(self):
        d = lambda_linear(lambda t: t, 0.0, 0.0, 0.0, lambda_max=1.0)
        assert evaluate(d, 0.25, 0.0, 0.0, 0.0, 1.0) == pytest.approx(0.25)

    def test_superposition(self, rng):
        """g(x1) + g(x2) - g(0) = g(x1 + x2) for the affine family."""
        d = lambda_linear(0.4, -0.6, 0.2, -0.3, lambda_max=1.0)
        for _ in range(50):
            a = rng.normal(size=3)
            b = rng.normal(size=3)
            lam = float(rng.uniform(0.0, 1.0))
            g = lambda x: evaluate(d, 0.2, x[0], x[1], x[2], lam)
            assert g(a) + g(b) - g(np.zeros(3)) == pytest.approx(g(a + b), abs=1e-12)

    def test_post_default_regime_override(self):
        """lam = 0 selects the post-default coefficients."""
        d = lambda_linear(1.0, 0.0, 0.5, 0.0, lambda_max=1.0, phi_post=2.0, beta_post=0.0)
        pre = evaluate(d, 0.1, 0.0, 1.0, 0.0, 1.0)
        post = evaluate(d, 0.1, 0.0, 1.0, 0.0, 0.0)
        assert pre == pytest.approx(1.5)
        assert post == pytest.approx(2.0)

    def test_jump_term_inert_where_intensity_vanishes(self):
        d = lambda_linear(0.0, 0.0, 0.0, 5.0, lambda_max=2.0)
        assert evaluate(d, 0.0, 1.0, 1.0, 7.0, 0.0) == 0.0


class TestPerfectMarket:
    def test_worked_value(self):
        """r=0.05, theta1=0.2, theta2=0.3, lambda=1 at (y,z,k)=(100,10,-5) -> -5.5."""
        d = perfect_market_driver(0.05, 0.2, 0.3, lambda_max=1.0)
        assert evaluate(d, 0.0, 100.0, 10.0, -5.0, 1.0) == pytest.approx(-5.5)

    def test_vanishes_at_origin(self):
        d = perfect_market_driver(0.05, 0.2, 0.3, lambda_max=1.0)
        for t in (0.0, 0.4, 0.9):
            assert evaluate(d, t, 0.0, 0.0, 0.0, 1.0) == 0.0


class TestAdmissibility:
    def test_linear_driver_passes(self):
        d = lambda_linear(0.1, -0.5, 0.4, 0.6, lambda_max=1.0)
        report = verify_admissibility(d, lambda_max=1.0, samples=200, seed=3)
        assert report.violations == 0

    def test_scale_weighted_jump_slope(self):
        """|g(k1)-g(k2)| <= C sqrt(lam)|k1-k2| needs C >= |gamma| sqrt(lam_max)."""
        d = custom_driver(
            lambda t, y, z, k, lam: 2.0 * k * lam,
            lipschitz=0.1,  # deliberately too small for lambda_max = 4
        )
        report = verify_admissibility(d, lambda_max=4.0, samples=300, seed=3)
        assert report.violations > 0

    def test_k_squared_driver_flagged(self):
        d = custom_driver(lambda t, y, z, k, lam: k * k * lam, lipschitz=1.0)
        report = verify_admissibility(d, lambda_max=1.0, samples=300, seed=3)
        assert report.violations > 0


def test_zero_driver():
    d = zero_driver()
    assert evaluate(d, 0.3, 5.0, -2.0, 1.0, 0.7) == 0.0


def test_expression_driver():
    d = expression_driver("0.1 - 0.2*y + z/2", lipschitz=0.5)
    assert evaluate(d, 0.0, 1.0, 2.0, 0.0, 0.0) == pytest.approx(0.1 - 0.2 + 1.0)


def test_expression_driver_rejects_bad_source():
    with pytest.raises(ValidationError):
        expression_driver("y +* z", lipschitz=1.0)


def test_large_investor_feedback_changes_value():
    base = perfect_market_driver(0.05, 0.2, 0.3, lambda_max=1.0)
    fed = large_investor_driver(
        0.05,
        0.2,
        0.3,
        0.2,
        0.3,
        lambda t, x, p1, p2: 0.4 * np.tanh(p2),
        lambda_max=1.0,
        impact_bound=0.4,
    )
    args = (0.0, 1.0, 0.5, -2.0, 1.0)
    assert evaluate(fed, *args) != pytest.approx(evaluate(base, *args))
