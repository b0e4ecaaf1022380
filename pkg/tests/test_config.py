"""JSON run-configuration loading."""

import hashlib
import json

import pytest

from bsde_engine.config import load_config, parse_config
from bsde_engine.exceptions import ConfigurationError


def write(tmp_path, payload):
    p = tmp_path / "run.json"
    p.write_text(json.dumps(payload))
    return str(p)


MINIMAL = {
    "grid": {"horizon": 1.0, "steps": 8},
    "intensity": {"model": "constant", "value": 0.5},
}


class TestDefaults:
    def test_minimal_config(self, tmp_path):
        cfg = load_config(write(tmp_path, MINIMAL))
        assert cfg.grid.n_steps == 8
        assert cfg.method == "tree"
        assert cfg.driver is None and cfg.claim is None and cfg.market is None
        assert cfg.dividends.is_zero
        assert cfg.threads == 1
        assert cfg.out_dir == "."
        assert cfg.suite_instances == 100 and cfg.suite_steps == 6

    def test_sha256_of_file_bytes(self, tmp_path):
        path = write(tmp_path, MINIMAL)
        cfg = load_config(path)
        with open(path, "rb") as fh:
            assert cfg.sha256 == hashlib.sha256(fh.read()).hexdigest()

    def test_require_reports_subcommand(self, tmp_path):
        cfg = load_config(write(tmp_path, MINIMAL))
        with pytest.raises(ConfigurationError, match="seed.*required by subcommand"):
            cfg.require("seed", "simulate")


class TestFieldErrors:
    def test_unknown_top_level_field(self):
        with pytest.raises(ConfigurationError, match="wobble: unknown field"):
            parse_config({**MINIMAL, "wobble": 1})

    def test_unknown_nested_field(self):
        bad = {**MINIMAL, "grid": {"horizon": 1.0, "steps": 8, "spacing": "log"}}
        with pytest.raises(ConfigurationError, match="grid.spacing: unknown field"):
            parse_config(bad)

    def test_missing_required_block(self):
        with pytest.raises(ConfigurationError, match="intensity: required block"):
            parse_config({"grid": {"horizon": 1.0, "steps": 8}})

    def test_bad_step_count(self):
        bad = {**MINIMAL, "grid": {"horizon": 1.0, "steps": 0}}
        with pytest.raises(ConfigurationError, match="grid.steps"):
            parse_config(bad)

    def test_affine_intensity_must_stay_nonnegative(self):
        bad = {**MINIMAL, "intensity": {"model": "affine", "base": 0.2, "slope": -0.5}}
        with pytest.raises(ConfigurationError, match="negative on the grid horizon"):
            parse_config(bad)

    def test_asset_claim_needs_market(self):
        bad = {**MINIMAL, "claim": {"type": "call", "strike": 1.0}}
        with pytest.raises(ConfigurationError, match="no market block"):
            parse_config(bad)

    def test_dividend_jump_outside_horizon(self):
        bad = {**MINIMAL, "dividend": {"jumps": [[1.5, 0.1]]}}
        with pytest.raises(ConfigurationError, match=r"dividend.jumps\[0\]"):
            parse_config(bad)

    def test_unknown_method(self):
        with pytest.raises(ConfigurationError, match="method"):
            parse_config({**MINIMAL, "method": "quadrature"})

    def test_bad_expression_source(self):
        bad = {
            **MINIMAL,
            "driver": {"type": "expression", "source": "y +* z", "lipschitz": 1.0},
        }
        with pytest.raises(ConfigurationError, match="driver.source"):
            parse_config(bad)


class TestBlocks:
    def test_linear_driver_with_post_regime(self):
        cfg = parse_config(
            {
                **MINIMAL,
                "driver": {
                    "type": "linear",
                    "phi": 0.1, "delta": -0.3, "beta": 0.2, "gamma": -0.5,
                    "phi_post": 0.0,
                },
            }
        )
        assert cfg.driver.is_lambda_linear
        assert cfg.driver.linear.at(0.0) == (0.1, -0.3, 0.2, -0.5)
        assert cfg.driver.linear.at(0.0, defaulted=True)[0] == 0.0

    def test_market_block_premia(self):
        cfg = parse_config(
            {
                **MINIMAL,
                "market": {
                    "rate": 0.03, "drift1": 0.08, "vol1": 0.2,
                    "drift2": 0.05, "vol2": 0.3,
                },
                "driver": {"type": "market"},
                "claim": {"type": "call", "strike": 0.8},
            }
        )
        assert cfg.market is not None
        assert cfg.driver.variant == "perfect_market"
        assert cfg.market.theta1_at(0.0) == pytest.approx(0.25)

    def test_suite_block(self):
        cfg = parse_config(
            {**MINIMAL, "suite": {"axioms": ["convexity"], "instances": 7, "steps": 4}}
        )
        assert cfg.suite_axioms == ("convexity",)
        assert cfg.suite_instances == 7 and cfg.suite_steps == 4

    def test_suite_rejects_unknown_axiom(self):
        with pytest.raises(ConfigurationError, match="suite.axioms"):
            parse_config({**MINIMAL, "suite": {"axioms": ["linearity"]}})

    def test_expression_claim_round_trip(self):
        cfg = parse_config(
            {**MINIMAL, "claim": {"type": "expression", "source": "exp(w) + n"}}
        )
        assert cfg.claim is not None and not cfg.claim.uses_assets
