"""Command-line harness: exit codes, artifacts, determinism."""

import json
import subprocess
import sys

import pytest

from bsde_engine.cli import main


def write_config(tmp_path, payload, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(payload))
    return str(p)


def kv_of(out_dir):
    text = (out_dir / "report.kv").read_text()
    return dict(line.split("=", 1) for line in text.splitlines())


LINEAR = {
    "grid": {"horizon": 1.0, "steps": 8},
    "intensity": {"model": "constant", "value": 0.5},
    "driver": {
        "type": "linear", "phi": 0.1, "delta": -0.3, "beta": 0.2, "gamma": -0.5,
    },
    "claim": {"type": "expression", "source": "min(max(w, -1), 1) + 0.3*n"},
    "method": "tree",
}

MARKET = {
    "grid": {"horizon": 1.0, "steps": 8},
    "intensity": {"model": "constant", "value": 0.4},
    "market": {"rate": 0.03, "drift1": 0.08, "vol1": 0.2, "drift2": 0.05, "vol2": 0.3},
    "driver": {"type": "market"},
    "claim": {"type": "call", "strike": 0.8},
    "method": "tree",
}

COUNTER = {
    "grid": {"horizon": 1.0, "steps": 200},
    "intensity": {"model": "constant", "value": 1.0},
    "driver": {"type": "linear", "gamma": -2.0},
    "claim": {"type": "default_digital"},
    "method": "tree",
}


class TestSolve:
    def test_tree_solve_artifacts(self, tmp_path):
        cfg = write_config(tmp_path, LINEAR)
        out = tmp_path / "out"
        assert main(["solve", "--config", cfg, "--out", str(out)]) == 0
        kv = kv_of(out)
        assert kv["subcommand"] == "solve"
        assert kv["method"] == "tree"
        assert float(kv["y0"]) == pytest.approx(0.23650728424463408, abs=1e-12)
        assert len(kv["config_sha256"]) == 64
        assert (out / "solution.csv").exists()
        assert (out / "report.txt").exists()

    def test_reruns_are_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path, LINEAR)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["solve", "--config", cfg, "--out", str(out1)]) == 0
        assert main(["solve", "--config", cfg, "--out", str(out2)]) == 0
        for name in ("report.kv", "solution.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_seed_override_recorded(self, tmp_path):
        cfg = write_config(tmp_path, {**LINEAR, "method": "lsmc", "paths": 4096})
        out = tmp_path / "out"
        code = main(["solve", "--config", cfg, "--seed", "77", "--out", str(out)])
        assert code == 0
        assert kv_of(out)["seed"] == "77"

    def test_lsmc_needs_seed_and_paths(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {**LINEAR, "method": "lsmc"})
        out = tmp_path / "out"
        assert main(["solve", "--config", cfg, "--out", str(out)]) == 2
        assert "seed" in capsys.readouterr().err
        seeded = write_config(tmp_path, {**LINEAR, "method": "lsmc", "seed": 1}, "b.json")
        assert main(["solve", "--config", seeded, "--out", str(out)]) == 2
        assert "paths" in capsys.readouterr().err

    def test_brownian_tree_depth_cap(self, tmp_path, capsys):
        deep = {**LINEAR, "grid": {"horizon": 1.0, "steps": 50}}
        cfg = write_config(tmp_path, deep)
        assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "grid.steps" in capsys.readouterr().err


class TestOtherCommands:
    def test_simulate_requires_seed(self, tmp_path, capsys):
        payload = {
            "grid": {"horizon": 1.0, "steps": 8},
            "intensity": {"model": "constant", "value": 0.5},
            "paths": 4096,
        }
        cfg = write_config(tmp_path, payload)
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "seed" in capsys.readouterr().err

    def test_simulate_writes_sample(self, tmp_path):
        payload = {
            "grid": {"horizon": 1.0, "steps": 8},
            "intensity": {"model": "constant", "value": 0.5},
            "paths": 8192,
            "seed": 5,
        }
        cfg = write_config(tmp_path, payload)
        out = tmp_path / "out"
        assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
        header = (out / "paths.csv").read_text().splitlines()[0]
        assert header == "path,step,t,dt,dW,dN,lambda,dM"
        kv = kv_of(out)
        assert float(kv["default_fraction"]) == pytest.approx(0.39, abs=0.02)

    def test_price_and_hedge(self, tmp_path):
        cfg = write_config(tmp_path, MARKET)
        pout, hout = tmp_path / "p", tmp_path / "h"
        assert main(["price", "--config", cfg, "--out", str(pout)]) == 0
        price = float(kv_of(pout)["price"])
        assert price == pytest.approx(0.2303028759274415, abs=1e-12)
        assert (pout / "price.csv").exists()

        assert main(["hedge", "--config", cfg, "--out", str(hout)]) == 0
        kv = kv_of(hout)
        assert float(kv["replication_max_abs"]) < 1e-10
        assert (hout / "hedge.csv").exists()

    def test_verify_suite(self, tmp_path):
        payload = {**MARKET, "seed": 424, "suite": {"instances": 3, "steps": 5}}
        cfg = write_config(tmp_path, payload)
        out = tmp_path / "out"
        assert main(["verify", "--config", cfg, "--out", str(out)]) == 0
        kv = kv_of(out)
        assert kv["suite_verdict"] == "PASS"
        assert kv["axiom_monotonicity"] == "PASS"
        lines = (out / "axioms.csv").read_text().splitlines()
        assert lines[0] == "axiom,verdict,passed,failed,inconclusive"
        assert len(lines) == 7

    def test_counterexample_reproduction(self, tmp_path):
        cfg = write_config(tmp_path, COUNTER)
        out = tmp_path / "out"
        assert main(["counterexample", "--config", cfg, "--out", str(out)]) == 0
        kv = kv_of(out)
        assert float(kv["y0"]) < -1.6
        assert float(kv["closed_form"]) == pytest.approx(-1.718281828459045, abs=1e-12)
        assert kv["verdict"] == "comparison hypotheses violated: gamma < -1"
        text = (out / "report.txt").read_text()
        assert "verdict: comparison hypotheses violated: gamma < -1" in text


class TestErrors:
    def test_unknown_field_exit_code(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {**LINEAR, "wobble": True})
        assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "wobble" in capsys.readouterr().err

    def test_unknown_subcommand_is_usage_error(self, tmp_path):
        cfg = write_config(tmp_path, LINEAR)
        with pytest.raises(SystemExit) as exc:
            main(["integrate", "--config", cfg])
        assert exc.value.code == 2

    def test_console_script(self, tmp_path):
        cfg = write_config(tmp_path, LINEAR)
        out = tmp_path / "out"
        proc = subprocess.run(
            [sys.executable, "-m", "bsde_engine.cli", "solve", "--config", cfg, "--out", str(out)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert (out / "report.kv").exists()
