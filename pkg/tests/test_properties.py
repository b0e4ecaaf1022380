"""Axiom suite over randomized instances."""

import pytest

from bsde_engine.exceptions import ValidationError
from bsde_engine.properties import AXIOMS, run_axiom_suite, suite_verdict


class TestSuite:
    def test_all_axioms_pass_on_small_run(self):
        results = run_axiom_suite(instances=8, base_seed=515, n_steps=5)
        assert len(results) == len(AXIOMS)
        for res in results:
            assert res.verdict == "PASS", res.line()
            assert res.passed >= 1
            assert res.failed == 0
        assert suite_verdict(results) == "PASS"

    def test_single_axiom_selection(self):
        results = run_axiom_suite(instances=4, base_seed=99, axioms=("convexity",))
        assert len(results) == 1
        assert results[0].axiom == "convexity"

    def test_unknown_axiom_rejected(self):
        with pytest.raises(ValidationError, match="unknown axiom"):
            run_axiom_suite(instances=2, axioms=("linearity",))

    def test_result_line_format(self):
        (res,) = run_axiom_suite(instances=3, base_seed=7, axioms=("consistency",))
        line = res.line()
        assert "consistency" in line and "PASS" in line


class TestForcedViolation:
    def test_jump_premium_above_one_is_detected(self):
        """Forced mode inverts the oracle: an instance counts as passed when
        the order violation is correctly reported."""
        results = run_axiom_suite(
            instances=6,
            base_seed=616,
            n_steps=5,
            axioms=("monotonicity",),
            force_theta2_above_one=True,
        )
        (res,) = results
        assert res.verdict == "PASS"
        assert res.passed == 6 and res.failed == 0
