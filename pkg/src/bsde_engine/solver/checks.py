"""Numerical certificates for the solver: stability bounds, contraction
rates, and order preservation.

All checks run on tree solutions, where conditional expectations are exact
and every verdict is a finite computation.  Discrete norms replace time
integrals by left-endpoint sums over the grid and expectations by
probability-weighted sums over the nodes of a level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..contracts import DividendProcess, no_dividends
from ..drivers import DriverSpec, coefficient_at, evaluate
from ..exceptions import ValidationError
from ..tree import ScenarioTree
from .results import BsdeSolution
from .tree_backward import level_moments, solve_tree, terminal_values

__all__ = [
    "EstimateCertificate",
    "PicardDiagnostic",
    "CheckItem",
    "ComparisonReport",
    "apriori_check",
    "picard_diagnostic",
    "comparison_check",
    "strict_comparison_check",
]

_GAP_TOL = 1e-10


@dataclass(frozen=True)
class EstimateCertificate:
    """Both sides of the stability bounds for a pair of solutions.

    y_lhs / y_rhs is the weighted-norm bound on the value difference;
    zk_lhs / zk_rhs the bound on the control differences, present only when
    eta * C^2 < 1 makes its prefactor finite.
    """

    eta: float
    beta: float
    lipschitz: float
    slack: float
    y_lhs: float
    y_rhs: float
    zk_lhs: float | None
    zk_rhs: float | None

    @property
    def passed(self) -> bool:
        if self.y_lhs > self.slack * self.y_rhs:
            return False
        if self.zk_rhs is not None and self.zk_lhs > self.slack * self.zk_rhs:
            return False
        return True

    @property
    def y_margin(self) -> float:
        return self.slack * self.y_rhs - self.y_lhs

    @property
    def zk_margin(self) -> float | None:
        if self.zk_rhs is None:
            return None
        return self.slack * self.zk_rhs - self.zk_lhs


@dataclass(frozen=True)
class PicardDiagnostic:
    """Contraction trace of the frozen-driver iteration."""

    beta: float
    distances: tuple[float, ...]
    ratios: tuple[float, ...]
    fixed_point_gap: float

    @property
    def max_ratio(self) -> float:
        return max(self.ratios, default=0.0)


@dataclass(frozen=True)
class CheckItem:
    """One verified hypothesis: its worst margin and a short account."""

    name: str
    passed: bool
    worst: float
    detail: str = ""


@dataclass(frozen=True)
class ComparisonReport:
    verdict: str
    hypotheses: tuple[CheckItem, ...]
    min_gap: float
    y1_root: float
    y2_root: float
    trace: tuple[str, ...]

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"


def _level_norm(
    tree: ScenarioTree, arrays, *, beta: float, lam_weight: bool = False
) -> float:
    total = 0.0
    for i in range(tree.n_steps):
        lvl = tree.levels[i]
        x = np.asarray(arrays[i], dtype=float)
        mass = lvl.prob * x * x
        if lam_weight:
            mass = mass * np.where(lvl.alive, float(tree.lam[i]), 0.0)
        total += math.exp(beta * float(tree.grid.nodes[i])) * float(mass.sum()) * float(
            tree.grid.dt[i]
        )
    return total


def _terminal_second_moment(tree: ScenarioTree, values: np.ndarray) -> float:
    return float((tree.leaves.prob * values * values).sum())


def apriori_check(
    tree: ScenarioTree,
    sol1: BsdeSolution,
    sol2: BsdeSolution,
    driver1: DriverSpec,
    driver2: DriverSpec,
    *,
    eta: float,
    beta: float,
    lipschitz: float | None = None,
    slack: float = 1.05,
) -> EstimateCertificate:
    """Certify the stability bounds for two solved instances on one tree.

    The driver perturbation is measured by evaluating both drivers at the
    second solution's states.  Parameters must satisfy eta <= 1 / C^2 and
    beta >= 3 / eta + 2 C; the control-side bound is emitted only when the
    strict inequality eta C^2 < 1 holds.
    """
    c = max(driver1.lipschitz, driver2.lipschitz) if lipschitz is None else lipschitz
    if eta <= 0:
        raise ValidationError("eta must be positive")
    if c > 0 and eta * c * c > 1.0 + 1e-12:
        raise ValidationError(f"eta={eta:.4g} exceeds 1/C^2 for C={c:.4g}")
    if beta + 1e-9 < 3.0 / eta + 2.0 * c:
        raise ValidationError(
            f"beta={beta:.4g} is below the admissible threshold {3.0 / eta + 2.0 * c:.4g}"
        )

    n = tree.n_steps
    horizon = tree.grid.horizon
    xi_bar = sol1.y[n] - sol2.y[n]
    e_xi2 = _terminal_second_moment(tree, xi_bar)

    g_bar = []
    for i in range(n):
        t = float(tree.grid.nodes[i])
        lam_nodes = np.where(tree.levels[i].alive, float(tree.lam[i]), 0.0)
        g1 = evaluate(driver1, t, sol2.y[i], sol2.z[i], sol2.k[i], lam_nodes)
        g2 = evaluate(driver2, t, sol2.y[i], sol2.z[i], sol2.k[i], lam_nodes)
        g_bar.append(g1 - g2)

    y_diff = [sol1.y[i] - sol2.y[i] for i in range(n)]
    z_diff = [sol1.z[i] - sol2.z[i] for i in range(n)]
    k_diff = [sol1.k[i] - sol2.k[i] for i in range(n)]

    data = math.exp(beta * horizon) * e_xi2 + eta * _level_norm(tree, g_bar, beta=beta)
    y_lhs = _level_norm(tree, y_diff, beta=beta)
    y_rhs = horizon * data

    zk_lhs = zk_rhs = None
    if eta * c * c < 1.0 - 1e-12:
        zk_lhs = _level_norm(tree, z_diff, beta=beta) + _level_norm(
            tree, k_diff, beta=beta, lam_weight=True
        )
        zk_rhs = data / (1.0 - eta * c * c)

    return EstimateCertificate(
        eta=eta,
        beta=beta,
        lipschitz=c,
        slack=slack,
        y_lhs=y_lhs,
        y_rhs=y_rhs,
        zk_lhs=zk_lhs,
        zk_rhs=zk_rhs,
    )


def picard_diagnostic(
    tree: ScenarioTree,
    driver: DriverSpec,
    claim,
    dividends: DividendProcess | None = None,
    *,
    iterations: int = 8,
    beta: float | None = None,
) -> PicardDiagnostic:
    """Trace the global fixed-point iteration that underlies well-posedness.

    Starting from the zero triple, each sweep recomputes the whole backward
    solution with the driver frozen at the previous iterate.  Distances
    between consecutive iterates are measured in the exponentially weighted
    norm at beta = 18 (T + 1) C^2 by default; their ratios expose the
    contraction rate, and the final iterate is compared against the implicit
    solver node by node.
    """
    if iterations < 2:
        raise ValidationError("need at least two sweeps to form a ratio")
    dividends = no_dividends() if dividends is None else dividends
    grid = tree.grid
    n = grid.n_steps
    c = driver.lipschitz
    if beta is None:
        beta = 18.0 * (grid.horizon + 1.0) * c * c
    dividends.validate_on(grid)
    step_div = dividends.step_amounts(grid)
    xi = terminal_values(tree, claim) + dividends.terminal_jump(grid)

    def sweep(prev_y, prev_z, prev_k):
        y = [np.empty(0)] * (n + 1)
        z = [np.empty(0)] * n
        k = [np.empty(0)] * n
        y[n] = xi
        for i in range(n - 1, -1, -1):
            ey, ez, ek, lam_nodes = level_moments(tree, i, y[i + 1])
            g_prev = evaluate(
                driver, float(grid.nodes[i]), prev_y[i], prev_z[i], prev_k[i], lam_nodes
            )
            y[i] = ey + g_prev * float(grid.dt[i]) + float(step_div[i])
            z[i] = ez
            k[i] = ek
        return y, z, k

    cur_y = [np.zeros(tree.levels[i].size) for i in range(n)] + [xi]
    cur_z = [np.zeros(tree.levels[i].size) for i in range(n)]
    cur_k = [np.zeros(tree.levels[i].size) for i in range(n)]
    distances: list[float] = []
    for _ in range(iterations):
        nxt_y, nxt_z, nxt_k = sweep(cur_y, cur_z, cur_k)
        d2 = (
            _level_norm(tree, [nxt_y[i] - cur_y[i] for i in range(n)], beta=beta)
            + _level_norm(tree, [nxt_z[i] - cur_z[i] for i in range(n)], beta=beta)
            + _level_norm(
                tree, [nxt_k[i] - cur_k[i] for i in range(n)], beta=beta, lam_weight=True
            )
        )
        distances.append(math.sqrt(d2))
        cur_y, cur_z, cur_k = nxt_y, nxt_z, nxt_k

    ratios = [
        distances[m + 1] / distances[m]
        for m in range(len(distances) - 1)
        if distances[m] > 0
    ]

    sol = solve_tree(tree, driver, claim, dividends)
    gap = max(
        float(np.max(np.abs(cur_y[i] - sol.y[i]))) if sol.y[i].size else 0.0
        for i in range(n + 1)
    )
    return PicardDiagnostic(
        beta=beta,
        distances=tuple(distances),
        ratios=tuple(ratios),
        fixed_point_gap=gap,
    )


def _candidate_values(
    driver1: DriverSpec, gamma_candidate, times: np.ndarray
) -> np.ndarray | None:
    if gamma_candidate is not None:
        return np.array([coefficient_at(gamma_candidate, float(t)) for t in times])
    if driver1.linear is not None:
        return np.array(
            [coefficient_at(driver1.linear.gamma, float(t)) for t in times]
        )
    return None


def _order_hypotheses(
    tree: ScenarioTree,
    sol1: BsdeSolution,
    sol2: BsdeSolution,
    driver1: DriverSpec,
    driver2: DriverSpec,
    div1: DividendProcess,
    div2: DividendProcess,
    gamma_candidate,
    tol: float,
) -> tuple[list[CheckItem], np.ndarray | None, list[np.ndarray]]:
    """Shared hypothesis battery for the order-preservation checks.

    Returns the check items, the per-step candidate slope values (None when
    no candidate is available), and the per-level driver differences
    evaluated at the second solution's states.
    """
    grid = tree.grid
    n = grid.n_steps
    items: list[CheckItem] = []

    xi_bar = sol1.y[n] - sol2.y[n]
    worst = float(xi_bar.min())
    items.append(
        CheckItem(
            name="terminal_order",
            passed=worst >= -tol,
            worst=worst,
            detail="min over leaves of the terminal difference",
        )
    )

    g_bar: list[np.ndarray] = []
    worst_g = math.inf
    for i in range(n):
        t = float(grid.nodes[i])
        lam_nodes = np.where(tree.levels[i].alive, float(tree.lam[i]), 0.0)
        g1 = evaluate(driver1, t, sol2.y[i], sol2.z[i], sol2.k[i], lam_nodes)
        g2 = evaluate(driver2, t, sol2.y[i], sol2.z[i], sol2.k[i], lam_nodes)
        diff = g1 - g2
        g_bar.append(diff)
        worst_g = min(worst_g, float(diff.min()))
    items.append(
        CheckItem(
            name="driver_order",
            passed=worst_g >= -tol,
            worst=worst_g,
            detail="min over nodes of the driver difference at shared states",
        )
    )

    d_bar = div1.step_amounts(grid) - div2.step_amounts(grid)
    t_bar = float(div1.terminal_jump(grid) - div2.terminal_jump(grid))
    worst_d = min(float(d_bar.min()), t_bar)
    items.append(
        CheckItem(
            name="dividend_order",
            passed=worst_d >= -tol,
            worst=worst_d,
            detail="min per-step dividend mass difference",
        )
    )

    gamma = _candidate_values(driver1, gamma_candidate, grid.nodes[:-1])
    if gamma is None:
        items.append(
            CheckItem(
                name="jump_slope_available",
                passed=False,
                worst=math.nan,
                detail="no jump-slope candidate: driver is not linear and none supplied",
            )
        )
        return items, None, g_bar

    worst_slope = float(gamma.min())
    items.append(
        CheckItem(
            name="jump_slope_above_minus_one",
            passed=worst_slope >= -1.0 - 1e-12,
            worst=worst_slope,
            detail="min candidate slope over the grid",
        )
    )
    lam_max = float(np.max(tree.lam)) if tree.lam.size else 0.0
    bound = float(np.max(np.abs(gamma))) * math.sqrt(lam_max)
    items.append(
        CheckItem(
            name="jump_slope_bounded",
            passed=math.isfinite(bound),
            worst=bound,
            detail="sup |slope| sqrt(lambda) over the grid",
        )
    )

    worst_ineq = math.inf
    for i in range(n):
        t = float(grid.nodes[i])
        lam_nodes = np.where(tree.levels[i].alive, float(tree.lam[i]), 0.0)
        ga = evaluate(driver1, t, sol2.y[i], sol2.z[i], sol1.k[i], lam_nodes)
        gb = evaluate(driver1, t, sol2.y[i], sol2.z[i], sol2.k[i], lam_nodes)
        lhs = ga - gb
        rhs = gamma[i] * lam_nodes * (sol1.k[i] - sol2.k[i])
        worst_ineq = min(worst_ineq, float((lhs - rhs).min()))
    items.append(
        CheckItem(
            name="jump_slope_inequality",
            passed=worst_ineq >= -tol,
            worst=worst_ineq,
            detail="driver increment in K minus slope times intensity-weighted K gap",
        )
    )
    return items, gamma, g_bar


def comparison_check(
    tree: ScenarioTree,
    driver1: DriverSpec,
    claim1,
    div1: DividendProcess | None,
    driver2: DriverSpec,
    claim2,
    div2: DividendProcess | None,
    *,
    gamma_candidate=None,
    tol: float = _GAP_TOL,
) -> ComparisonReport:
    """Order-preservation check for two instances on one tree.

    Verdicts: PASS when the hypotheses hold and the first solution dominates
    at every node; FAIL whenever domination is violated, regardless of the
    hypotheses (the trace then shows which hypothesis explains it, e.g. a
    jump slope below -1); INCONCLUSIVE when some hypothesis fails or cannot
    be verified but the ordering still holds.
    """
    div1 = no_dividends() if div1 is None else div1
    div2 = no_dividends() if div2 is None else div2
    sol1 = solve_tree(tree, driver1, claim1, div1)
    sol2 = solve_tree(tree, driver2, claim2, div2)
    items, _, _ = _order_hypotheses(
        tree, sol1, sol2, driver1, driver2, div1, div2, gamma_candidate, tol
    )

    min_gap = math.inf
    where = ""
    for i in range(tree.n_steps + 1):
        diff = sol1.y[i] - sol2.y[i]
        lvl_min = float(diff.min())
        if lvl_min < min_gap:
            min_gap = lvl_min
            where = f"level {i}, node {int(diff.argmin())}"

    ordering_ok = min_gap >= -tol
    hypotheses_ok = all(item.passed for item in items)
    if not ordering_ok:
        verdict = "FAIL"
    elif hypotheses_ok:
        verdict = "PASS"
    else:
        verdict = "INCONCLUSIVE"

    trace = [
        f"{item.name}: {'ok' if item.passed else 'violated'} (worst {item.worst:.6g})"
        for item in items
    ]
    trace.append(f"ordering: min gap {min_gap:.6g} at {where}")
    trace.append(f"roots: {sol1.y0:.12g} vs {sol2.y0:.12g}")
    return ComparisonReport(
        verdict=verdict,
        hypotheses=tuple(items),
        min_gap=min_gap,
        y1_root=sol1.y0,
        y2_root=sol2.y0,
        trace=tuple(trace),
    )


def strict_comparison_check(
    tree: ScenarioTree,
    driver1: DriverSpec,
    claim1,
    div1: DividendProcess | None,
    driver2: DriverSpec,
    claim2,
    div2: DividendProcess | None,
    *,
    gamma_candidate=None,
    tol: float = _GAP_TOL,
) -> ComparisonReport:
    """Flatness propagation: where the two solutions touch, they must stay
    equal afterwards, and the data must agree on the whole subtree.

    Verdicts: NOT_TRIGGERED when the solutions never touch; PASS when every
    touching node has identical terminal data, driver values and dividends
    on its subtree; FAIL when a touching node has differing data downstream
    (the trace flags a candidate slope at the -1 boundary, where strictness
    is known to break); INCONCLUSIVE when the subtree data agree but some
    hypothesis could not be verified.
    """
    div1 = no_dividends() if div1 is None else div1
    div2 = no_dividends() if div2 is None else div2
    sol1 = solve_tree(tree, driver1, claim1, div1)
    sol2 = solve_tree(tree, driver2, claim2, div2)
    items, gamma, g_bar = _order_hypotheses(
        tree, sol1, sol2, driver1, driver2, div1, div2, gamma_candidate, tol
    )
    n = tree.n_steps

    # backward-propagated flags: does any node of the subtree carry a difference
    xi_bar = sol1.y[n] - sol2.y[n]
    term_flag = [np.empty(0, dtype=bool)] * (n + 1)
    drv_flag = [np.empty(0, dtype=bool)] * (n + 1)
    term_flag[n] = np.abs(xi_bar) > tol
    drv_flag[n] = np.zeros(xi_bar.size, dtype=bool)
    for i in range(n - 1, -1, -1):
        cs = tree.levels[i].child_start
        term_flag[i] = np.logical_or.reduceat(term_flag[i + 1], cs)
        child_drv = np.logical_or.reduceat(drv_flag[i + 1], cs)
        drv_flag[i] = child_drv | (np.abs(g_bar[i]) > tol)

    d_bar = div1.step_amounts(tree.grid) - div2.step_amounts(tree.grid)
    div_differs_from = np.zeros(n + 1, dtype=bool)
    differs = abs(float(div1.terminal_jump(tree.grid) - div2.terminal_jump(tree.grid))) > tol
    div_differs_from[n] = differs
    for i in range(n - 1, -1, -1):
        differs = differs or abs(float(d_bar[i])) > tol
        div_differs_from[i] = differs

    triggers = 0
    violations: list[str] = []
    for i in range(n + 1):
        touch = np.abs(sol1.y[i] - sol2.y[i]) <= tol
        hit = np.nonzero(touch)[0]
        triggers += hit.size
        for v in hit:
            if term_flag[i][v] or drv_flag[i][v] or div_differs_from[i]:
                violations.append(
                    f"level {i}, node {int(v)}: solutions touch but subtree data differ"
                )

    hypotheses_ok = all(item.passed for item in items)
    strict_slope = gamma is not None and float(gamma.min()) > -1.0 + 1e-12

    if triggers == 0:
        verdict = "NOT_TRIGGERED"
    elif violations:
        verdict = "FAIL"
    elif hypotheses_ok and strict_slope:
        verdict = "PASS"
    else:
        verdict = "INCONCLUSIVE"

    trace = [
        f"{item.name}: {'ok' if item.passed else 'violated'} (worst {item.worst:.6g})"
        for item in items
    ]
    trace.append(f"touching nodes: {triggers}")
    if gamma is not None and not strict_slope:
        trace.append(
            "candidate slope reaches -1: flatness propagation is not guaranteed"
        )
    trace.extend(violations[:5])
    if len(violations) > 5:
        trace.append(f"... {len(violations) - 5} more violations")

    min_gap = min(
        float((sol1.y[i] - sol2.y[i]).min()) for i in range(n + 1)
    )
    return ComparisonReport(
        verdict=verdict,
        hypotheses=tuple(items),
        min_gap=min_gap,
        y1_root=sol1.y0,
        y2_root=sol2.y0,
        trace=tuple(trace),
    )
