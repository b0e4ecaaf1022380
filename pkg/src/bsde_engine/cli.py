"""Command-line harness.

    bsde <subcommand> --config <path> [--seed N] [--out DIR] [--threads K]

Subcommands: simulate, solve, price, hedge, verify, counterexample.  Every
run writes report.txt (human summary), report.kv (machine key=value lines)
and a subcommand CSV into the output directory.  Identical configs produce
byte-identical report.kv and CSV files; reports never contain timestamps.

Exit codes: 0 success, 2 config or input validation error, 3 suite failure
(a FAIL verdict or a missed reproduction), 4 numerical breakdown.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import os
import sys

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .exceptions import (
    ConfigurationError,
    PicardConvergenceError,
    RegressionError,
    UnsupportedModelError,
    ValidationError,
)
from .expressions import compile_expression
from .market import pricing_driver
from .pricing import (
    MonteCarloPlan,
    hedge_from_solution,
    path_claim,
    price_nonlinear,
    replicate,
    tree_claim_values,
)
from .properties import run_axiom_suite, suite_verdict
from .scenarios import compensator_residual, iter_path_batches, simulate_paths
from .solver import (
    representation_monte_carlo,
    solve_linear_representation,
    solve_lsmc,
    solve_tree,
)
from .stats import RunningMoments
from .tree import MAX_TREE_STEPS, build_tree

SUBCOMMANDS = ("simulate", "solve", "price", "hedge", "verify", "counterexample")

_EXIT_OK = 0
_EXIT_CONFIG = 2
_EXIT_SUITE = 3
_EXIT_NUMERICAL = 4


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_artifacts(out_dir: str, txt_lines: list[str], kv: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.txt"), "w", newline="\n") as fh:
        fh.write("\n".join(txt_lines) + "\n")
    with open(os.path.join(out_dir, "report.kv"), "w", newline="\n") as fh:
        for key in sorted(kv):
            fh.write(f"{key}={kv[key]}\n")


def _base_kv(cfg: RunConfig, subcommand: str) -> dict:
    return {
        "version": __version__,
        "subcommand": subcommand,
        "config_sha256": cfg.sha256,
        "seed": "none" if cfg.seed is None else str(cfg.seed),
        "threads": str(cfg.threads),
        "method": cfg.method,
    }


def _header(cfg: RunConfig, subcommand: str) -> list[str]:
    return [
        f"backward-jump pricing engine v{__version__}",
        f"subcommand: {subcommand}",
        f"config sha256: {cfg.sha256}",
        f"seed: {'none' if cfg.seed is None else cfg.seed}",
        "",
    ]


def _claim_uses_w(cfg: RunConfig) -> bool:
    block = cfg.raw.get("claim")
    if block is None or cfg.claim is None:
        return False
    kind = block.get("type")
    if kind in ("constant", "default_digital"):
        return False
    if kind == "expression":
        expr = compile_expression(block["source"], ["w", "n", "s1", "s2"])
        return bool(set(expr.used_variables) - {"n"})
    return True


def _default_only_applies(cfg: RunConfig) -> bool:
    """True when no quantity in the run depends on the Brownian coordinate,
    so the tree can skip Brownian branching and afford long grids."""
    if cfg.market is not None:
        return False
    block = cfg.raw.get("driver")
    if block is not None:
        if block.get("type") != "linear":
            return False
        if block.get("beta", 0) != 0 or block.get("beta_post") not in (None, 0):
            return False
    return not _claim_uses_w(cfg)


def _tree_for(cfg: RunConfig):
    brownian = not _default_only_applies(cfg)
    if brownian and cfg.grid.n_steps > MAX_TREE_STEPS:
        raise ConfigurationError(
            f"grid.steps: tree method branches in the Brownian coordinate and "
            f"is capped at {MAX_TREE_STEPS} steps; got {cfg.grid.n_steps}. "
            f"Use method 'lsmc', or a claim and driver free of the Brownian "
            f"coordinate (then the tree collapses to default-only branching)."
        )
    return build_tree(cfg.grid, cfg.intensity, brownian=brownian)


def _tree_xi(cfg: RunConfig, tree):
    if cfg.claim is None:
        raise ConfigurationError("claim: required block is missing")
    if cfg.claim.uses_assets:
        return tree_claim_values(tree, cfg.market, cfg.claim)
    return cfg.claim


def _path_xi(cfg: RunConfig):
    if cfg.claim is None:
        raise ConfigurationError("claim: required block is missing")
    if cfg.claim.uses_assets:
        return path_claim(cfg.market, cfg.claim)
    return cfg.claim


def _require_seed(cfg: RunConfig, subcommand: str) -> int:
    if cfg.seed is None:
        raise ConfigurationError(
            f"seed: required for stochastic subcommand/method ({subcommand})"
        )
    return cfg.seed


def _require_paths(cfg: RunConfig) -> int:
    if cfg.paths is None:
        raise ConfigurationError("paths: required for the chosen method")
    return cfg.paths


def _cmd_simulate(cfg: RunConfig, out_dir: str) -> int:
    seed = _require_seed(cfg, "simulate")
    count = _require_paths(cfg)
    sample = simulate_paths(cfg.grid, cfg.intensity, count=min(count, 512), seed=seed)
    sample.to_csv(os.path.join(out_dir, "paths.csv"))

    defaults = RunningMoments()
    residuals = RunningMoments()
    for batch in iter_path_batches(cfg.grid, cfg.intensity, count, seed):
        defaults.add(batch.defaulted.astype(float))
        res = compensator_residual(batch, keep=True)
        residuals.add(res.residuals)

    kv = _base_kv(cfg, "simulate")
    kv.update(
        paths=str(count),
        steps=str(cfg.grid.n_steps),
        horizon=_fmt(cfg.grid.horizon),
        default_fraction=_fmt(defaults.mean),
        default_fraction_se=_fmt(defaults.se),
        residual_mean=_fmt(residuals.mean),
        residual_se=_fmt(residuals.se),
        csv_rows=str(sample.count * cfg.grid.n_steps),
    )
    txt = _header(cfg, "simulate") + [
        f"simulated {count} paths on {cfg.grid.n_steps} steps, horizon {cfg.grid.horizon:g}",
        f"default fraction: {defaults.mean:.6g} (se {defaults.se:.3g})",
        f"compensated-jump residual mean: {residuals.mean:.6g} (se {residuals.se:.3g})",
        f"paths.csv holds the first {sample.count} paths",
    ]
    _write_artifacts(out_dir, txt, kv)
    return _EXIT_OK


def _cmd_solve(cfg: RunConfig, out_dir: str) -> int:
    if cfg.driver is None:
        raise ConfigurationError("driver: required block is missing")
    kv = _base_kv(cfg, "solve")
    txt = _header(cfg, "solve")

    if cfg.method == "tree":
        tree = _tree_for(cfg)
        sol = solve_tree(tree, cfg.driver, _tree_xi(cfg, tree), cfg.dividends)
        sol.to_csv(os.path.join(out_dir, "solution.csv"))
        kv.update(
            y0=_fmt(sol.y0),
            nodes=str(tree.node_count),
            picard_iterations=str(sol.diagnostics.picard_iterations),
        )
        txt += [
            f"tree solve on {tree.n_steps} steps, {tree.node_count} nodes",
            f"Y0 = {sol.y0:.12g}",
        ]
    elif cfg.method == "lsmc":
        seed = _require_seed(cfg, "solve/lsmc")
        paths = simulate_paths(cfg.grid, cfg.intensity, count=_require_paths(cfg), seed=seed)
        sol = solve_lsmc(paths, cfg.driver, _path_xi(cfg), cfg.dividends)
        sol.to_csv(os.path.join(out_dir, "solution.csv"))
        kv.update(
            y0=_fmt(sol.y0),
            y0_se=_fmt(sol.diagnostics.y0_se),
            paths=str(paths.count),
        )
        txt += [
            f"regression solve on {paths.count} paths, {cfg.grid.n_steps} steps",
            f"Y0 = {sol.y0:.12g} (se {sol.diagnostics.y0_se:.3g})",
        ]
    else:
        if cfg.paths is not None:
            seed = _require_seed(cfg, "solve/representation")
            res = representation_monte_carlo(
                cfg.grid,
                cfg.intensity,
                cfg.driver,
                _path_xi(cfg),
                cfg.dividends,
                count=cfg.paths,
                seed=seed,
            )
            kv.update(y0=_fmt(res.y0), y0_se=_fmt(res.se), paths=str(res.count))
            txt += [
                f"adjoint representation over {res.count} sampled paths",
                f"Y0 = {res.y0:.12g} (se {res.se:.3g})",
            ]
            with open(os.path.join(out_dir, "solution.csv"), "w", newline="\n") as fh:
                fh.write("quantity,value\n")
                fh.write(f"y0,{_fmt(res.y0)}\n")
                fh.write(f"se,{_fmt(res.se)}\n")
        else:
            tree = _tree_for(cfg)
            res = solve_linear_representation(tree, cfg.driver, _tree_xi(cfg, tree), cfg.dividends)
            kv.update(y0=_fmt(res.y0), nodes=str(tree.node_count))
            txt += [
                f"adjoint representation on the {tree.n_steps}-step tree",
                f"Y0 = {res.y0:.12g}",
            ]
            with open(os.path.join(out_dir, "solution.csv"), "w", newline="\n") as fh:
                fh.write("step,t,Y\n")
                for i, level in enumerate(res.y):
                    mean = float(
                        np.dot(tree.levels[i].prob, level) / tree.levels[i].prob.sum()
                    )
                    fh.write(f"{i},{_fmt(tree.grid.nodes[i])},{_fmt(mean)}\n")

    _write_artifacts(out_dir, txt, kv)
    return _EXIT_OK


def _price_report(cfg: RunConfig, subcommand: str):
    if cfg.market is None:
        raise ConfigurationError("market: required block is missing")
    if cfg.claim is None:
        raise ConfigurationError("claim: required block is missing")
    driver = cfg.driver if cfg.driver is not None else pricing_driver(cfg.market, cfg.grid)

    if cfg.method == "tree":
        scenario = _tree_for(cfg)
    elif cfg.method == "lsmc":
        seed = _require_seed(cfg, f"{subcommand}/lsmc")
        scenario = simulate_paths(
            cfg.grid, cfg.intensity, count=_require_paths(cfg), seed=seed
        )
    else:
        seed = _require_seed(cfg, f"{subcommand}/representation")
        scenario = MonteCarloPlan(
            grid=cfg.grid,
            intensity=cfg.intensity,
            count=_require_paths(cfg),
            seed=seed,
        )
    report = price_nonlinear(
        scenario, cfg.market, driver, cfg.claim, cfg.dividends, method=cfg.method
    )
    return scenario, driver, report


def _cmd_price(cfg: RunConfig, out_dir: str) -> int:
    scenario, _, report = _price_report(cfg, "price")
    report.to_csv(os.path.join(out_dir, "price.csv"))
    kv = _base_kv(cfg, "price")
    kv.update(price=_fmt(report.price))
    if report.se is not None:
        kv.update(price_se=_fmt(report.se))
    txt = _header(cfg, "price") + report.summary().splitlines()
    _write_artifacts(out_dir, txt, kv)
    return _EXIT_OK


def _cmd_hedge(cfg: RunConfig, out_dir: str) -> int:
    if cfg.method not in ("tree", "lsmc"):
        raise ConfigurationError("method: hedge supports 'tree' and 'lsmc'")
    scenario, driver, report = _price_report(cfg, "hedge")
    if report.solution is None:
        raise ConfigurationError("method: hedge needs a backward solution")
    strategy = hedge_from_solution(report.solution, cfg.market)
    report.to_csv(os.path.join(out_dir, "hedge.csv"))

    if cfg.method == "tree":
        eval_scenario = scenario
    else:
        # out-of-sample evaluation set, disjoint stream from the fit
        eval_scenario = simulate_paths(
            cfg.grid,
            cfg.intensity,
            count=_require_paths(cfg),
            seed=_require_seed(cfg, "hedge") + 1,
        )
    stats = replicate(
        eval_scenario, cfg.market, driver, strategy, report.price, cfg.claim, cfg.dividends
    )
    kv = _base_kv(cfg, "hedge")
    kv.update(
        price=_fmt(report.price),
        replication_max_abs=_fmt(stats.max_abs),
        replication_rel_l2=_fmt(stats.rel_l2),
    )
    txt = _header(cfg, "hedge") + report.summary().splitlines() + [
        "",
        f"replication over {stats.count} scenarios:",
        f"  max |error|: {stats.max_abs:.6g}",
        f"  relative L2 error: {stats.rel_l2:.6g}",
    ]
    _write_artifacts(out_dir, txt, kv)
    return _EXIT_OK


def _cmd_verify(cfg: RunConfig, out_dir: str) -> int:
    seed = _require_seed(cfg, "verify")
    results = run_axiom_suite(
        instances=cfg.suite_instances,
        base_seed=seed,
        n_steps=cfg.suite_steps,
        market=cfg.market,
        axioms=cfg.suite_axioms,
    )
    overall = suite_verdict(results)
    kv = _base_kv(cfg, "verify")
    kv.update(suite_verdict=overall, suite_instances=str(cfg.suite_instances))
    for r in results:
        kv[f"axiom_{r.axiom}"] = r.verdict
        kv[f"axiom_{r.axiom}_counts"] = f"{r.passed}/{r.failed}/{r.inconclusive}"

    with open(os.path.join(out_dir, "axioms.csv"), "w", newline="\n") as fh:
        fh.write("axiom,verdict,passed,failed,inconclusive\n")
        for r in results:
            fh.write(f"{r.axiom},{r.verdict},{r.passed},{r.failed},{r.inconclusive}\n")

    txt = _header(cfg, "verify")
    for r in results:
        txt.append(r.line())
        txt.extend(f"  {note}" for note in r.notes)
    txt.append(f"suite verdict: {overall}")
    _write_artifacts(out_dir, txt, kv)
    return _EXIT_SUITE if overall == "FAIL" else _EXIT_OK


def _cmd_counterexample(cfg: RunConfig, out_dir: str) -> int:
    from .contracts import default_digital_claim
    from .solver import comparison_check

    if cfg.driver is None or cfg.driver.linear is None:
        raise ConfigurationError("driver: counterexample needs a linear driver block")
    claim = cfg.claim if cfg.claim is not None else default_digital_claim()
    cfg = dataclasses.replace(cfg, claim=claim)

    tree = _tree_for(cfg)
    sol = solve_tree(tree, cfg.driver, _tree_xi(cfg, tree), cfg.dividends)
    sol.to_csv(os.path.join(out_dir, "solution.csv"))

    *_, gamma = cfg.driver.linear.at(0.0)
    pure_jump = all(
        abs(v) < 1e-15
        for t in cfg.grid.nodes[:-1]
        for v in cfg.driver.linear.at(float(t))[:3]
    )
    constant_lam = cfg.intensity.mode == "constant"

    closed_form = None
    expected_mean = None
    if pure_jump and constant_lam and claim.kind == "default_digital":
        lam = cfg.intensity.lambda_max
        horizon = cfg.grid.horizon
        closed_form = 1.0 - math.exp(-(1.0 + gamma) * lam * horizon)
        expected_mean = 1.0 - math.exp(-lam * horizon)

    from .contracts import constant_claim as _const

    comp = comparison_check(
        tree, cfg.driver, claim, None, cfg.driver, _const(0.0), None
    )
    slope_item = next(
        (h for h in comp.hypotheses if h.name == "jump_slope_above_minus_one"), None
    )
    slope_violated = slope_item is not None and not slope_item.passed
    if slope_violated:
        verdict = "comparison hypotheses violated: gamma < -1"
    else:
        verdict = "comparison hypotheses hold: gamma >= -1"

    kv = _base_kv(cfg, "counterexample")
    kv.update(
        y0=_fmt(sol.y0),
        gamma=_fmt(gamma),
        verdict=verdict,
        comparison_verdict=comp.verdict,
    )
    txt = _header(cfg, "counterexample") + [
        f"driver: jump-slope {gamma:g} on intensity-weighted jump risk",
        f"claim: {claim.kind}",
        f"Y0 = {sol.y0:.12g}",
    ]
    ok = True
    if closed_form is not None:
        kv.update(closed_form=_fmt(closed_form), payout_mean=_fmt(expected_mean))
        txt.append(f"closed form: {closed_form:.12g} (|gap| {abs(sol.y0 - closed_form):.3g})")
        txt.append(f"plain expected payout: {expected_mean:.12g}")
        if abs(sol.y0 - closed_form) > 2e-2:
            ok = False
            txt.append("reproduction FAILED: tree value is off the closed form")
    if gamma < -1.0 and not slope_violated:
        ok = False
        txt.append("reporting FAILED: slope violation was not flagged")
    txt.append(f"verdict: {verdict}")
    _write_artifacts(out_dir, txt, kv)
    return _EXIT_OK if ok else _EXIT_SUITE


_COMMANDS = {
    "simulate": _cmd_simulate,
    "solve": _cmd_solve,
    "price": _cmd_price,
    "hedge": _cmd_hedge,
    "verify": _cmd_verify,
    "counterexample": _cmd_counterexample,
}


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bsde",
        description="Backward-equation engine with default-jump noise: "
        "simulate, solve, price, hedge, verify, counterexample.",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="path to the JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="override the output directory")
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="worker bound (recorded; execution is deterministic and single-threaded)",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigurationError("seed: must be nonnegative")
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigurationError("threads: must be at least 1")
            cfg = dataclasses.replace(cfg, threads=args.threads)
        out_dir = args.out if args.out is not None else cfg.out_dir
        try:
            os.makedirs(out_dir, exist_ok=True)
        except OSError as exc:
            raise ConfigurationError(f"out: cannot create directory ({exc})") from exc
        return _COMMANDS[args.subcommand](cfg, out_dir)
    except (PicardConvergenceError, RegressionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return _EXIT_NUMERICAL
    except (ConfigurationError, UnsupportedModelError, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
