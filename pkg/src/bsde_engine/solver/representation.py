"""Closed-form evaluation of linear backward equations.

For a driver g = phi + delta y + beta z + gamma k lambda the solution is a
weighted expectation of payoff and dividends under the multiplicative adjoint.
On the tree the one-step equation is linear, so eliminating (Z, K) gives the
exact child-weight form

    Y_v = ( E_v[ Y_child (1 + beta dW + gtilde (dN - p)) ] + phi dt + dD )
          / (1 - delta dt),

with gtilde = gamma lambda dt / (p (1 - p)); this reproduces the implicit
backward induction bit for bit up to the Picard tolerance, which is the
discrete representation identity.  On Monte Carlo paths the continuous-time
exponential adjoint is used instead and the value is a sample mean with a
standard error.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from ..adjoint import adjoint_matrix
from ..contracts import ClaimSpec, DividendProcess, TerminalState, no_dividends
from ..drivers import DriverSpec
from ..exceptions import ValidationError
from ..scenarios import IntensityModel, ScenarioSet, TimeGrid, iter_path_batches
from ..stats import RunningMoments
from ..tree import ScenarioTree
from .tree_backward import child_geometry, terminal_values

__all__ = [
    "RepresentationResult",
    "solve_linear_representation",
    "representation_values",
    "representation_monte_carlo",
    "path_terminal_values",
]

_LAMBDA_FLOOR = 1e-12


@dataclass(frozen=True)
class RepresentationResult:
    """Value of a linear backward equation.

    On the tree y holds the per-level node values and the answer is exact; on
    paths y is None and (y0, se, count) describe the Monte Carlo estimate.
    """

    y0: float
    method: str
    y: tuple[np.ndarray, ...] | None = None
    se: float | None = None
    count: int | None = None


def solve_linear_representation(
    scenario: ScenarioTree | ScenarioSet,
    driver: DriverSpec,
    claim,
    dividends: DividendProcess | None = None,
) -> RepresentationResult:
    if not driver.is_lambda_linear:
        raise ValidationError(
            f"representation needs a linear driver, got variant {driver.variant!r}"
        )
    dividends = no_dividends() if dividends is None else dividends
    if isinstance(scenario, ScenarioTree):
        return _tree_representation(scenario, driver, claim, dividends)
    if isinstance(scenario, ScenarioSet):
        values = representation_values(scenario, driver, claim, dividends)
        moments = RunningMoments()
        moments.add(values)
        return RepresentationResult(
            y0=moments.mean, method="paths", se=moments.se, count=moments.count
        )
    raise ValidationError(f"unsupported scenario type {type(scenario).__name__}")


def _tree_representation(
    tree: ScenarioTree,
    driver: DriverSpec,
    claim,
    dividends: DividendProcess,
) -> RepresentationResult:
    grid = tree.grid
    n = grid.n_steps
    dt = grid.dt
    dividends.validate_on(grid)
    step_div = dividends.step_amounts(grid)
    coeffs = driver.linear

    y_levels: list[np.ndarray] = [np.empty(0)] * (n + 1)
    y_next = terminal_values(tree, claim) + dividends.terminal_jump(grid)
    y_levels[n] = y_next

    for i in range(n - 1, -1, -1):
        level = tree.levels[i]
        t = float(grid.nodes[i])
        phi_a, delta_a, beta_a, gamma_a = coeffs.at(t, defaulted=False)
        phi_d, delta_d, beta_d, _ = coeffs.at(t, defaulted=True)
        trans, dw, dn = child_geometry(tree, i)
        parent = tree.levels[i + 1].parent
        parent_alive = level.alive[parent]

        q = float(tree.lam[i] * dt[i])
        p = float(tree.p_default[i])
        gtilde = gamma_a * q / (p * (1.0 - p)) if q > _LAMBDA_FLOOR else 0.0
        beta_c = np.where(parent_alive, beta_a, beta_d)
        factor = 1.0 + beta_c * dw + np.where(parent_alive, gtilde * (dn - p), 0.0)

        acc = np.add.reduceat(trans * factor * y_next, level.child_start)
        phi_v = np.where(level.alive, phi_a, phi_d)
        delta_v = np.where(level.alive, delta_a, delta_d)
        denom = 1.0 - delta_v * dt[i]
        if np.any(denom <= 0):
            raise ValidationError(
                f"level coefficient delta = {delta_a:g} makes 1 - delta dt "
                f"non-positive at step {i}; refine the grid"
            )
        y_next = (acc + phi_v * dt[i] + step_div[i]) / denom
        y_levels[i] = y_next

    return RepresentationResult(
        y0=float(y_levels[0][0]), method="tree", y=tuple(y_levels)
    )


def path_terminal_values(batch: ScenarioSet, claim) -> np.ndarray:
    """Per-path terminal payoff; ClaimSpec, array, or callable over the batch."""
    if isinstance(claim, ClaimSpec):
        w = batch.dw.sum(axis=1)
        return claim(TerminalState(w=w, defaulted=batch.defaulted.copy()))
    if callable(claim):
        vals = np.asarray(claim(batch), dtype=float)
    else:
        vals = np.asarray(claim, dtype=float)
    if vals.shape != (batch.count,):
        raise ValidationError(
            f"terminal values have shape {vals.shape} for {batch.count} paths"
        )
    return vals


def representation_values(
    batch: ScenarioSet,
    driver: DriverSpec,
    claim,
    dividends: DividendProcess | None = None,
) -> np.ndarray:
    """Per-path discounted functional whose mean is the linear value.

    Uses the exponential adjoint; dividend mass is weighted by the adjoint at
    the crediting node, a jump at the horizon by the terminal adjoint.
    """
    if not driver.is_lambda_linear:
        raise ValidationError(
            f"representation needs a linear driver, got variant {driver.variant!r}"
        )
    dividends = no_dividends() if dividends is None else dividends
    grid = batch.grid
    n = grid.n_steps
    dt = grid.dt
    dividends.validate_on(grid)
    step_div = dividends.step_amounts(grid)
    coeffs = driver.linear

    pre = np.array([coeffs.at(float(t), defaulted=False) for t in grid.nodes[:n]])
    post = np.array([coeffs.at(float(t), defaulted=True) for t in grid.nodes[:n]])
    regime_split = any(
        c is not None for c in (coeffs.phi_post, coeffs.delta_post, coeffs.beta_post)
    )
    if regime_split:
        flags = np.column_stack([batch.post_default_col(i) for i in range(n)])
        delta = np.where(flags, post[:, 1], pre[:, 1])
        beta = np.where(flags, post[:, 2], pre[:, 2])
        phi = np.where(flags, post[:, 0], pre[:, 0])
    else:
        delta, beta, phi = pre[:, 1], pre[:, 2], pre[:, 0]
    gamma = pre[:, 3]

    gam = adjoint_matrix(batch, delta, beta, gamma, form="exponential")
    xi = path_terminal_values(batch, claim) + dividends.terminal_jump(grid)
    out = gam[:, n] * xi
    for i in range(n):
        phi_col = phi[:, i] if regime_split else phi[i]
        out += gam[:, i] * (phi_col * dt[i] + step_div[i])
    return out


def representation_monte_carlo(
    grid: TimeGrid,
    intensity: IntensityModel,
    driver: DriverSpec,
    claim,
    dividends: DividendProcess | None = None,
    *,
    count: int,
    seed: int,
    batch: int = 65536,
) -> RepresentationResult:
    """Streamed Monte Carlo evaluation at ensemble sizes beyond memory."""
    moments = RunningMoments()
    for chunk in iter_path_batches(grid, intensity, count, seed, batch=batch):
        moments.add(representation_values(chunk, driver, claim, dividends))
    return RepresentationResult(
        y0=moments.mean, method="paths", se=moments.se, count=moments.count
    )
