"""Least-squares Monte Carlo backward solver.

Conditional expectations are replaced by polynomial projections on the
Brownian level, fitted separately on the surviving and the defaulted regime
(the default changes the value function discontinuously, which no global
polynomial tracks).  The explicit scheme propagates the projected values by
default; the implicit variant re-solves the one-step fixed point per path.

The jump control K is projected from variance-normalised jump residuals,
mirroring the tree estimator: target Y * (dN - q) / (q (1 - q)) with
q = lambda dt, fitted on surviving paths only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..contracts import DividendProcess, no_dividends
from ..drivers import DriverSpec, evaluate
from ..exceptions import ValidationError
from ..scenarios import ScenarioSet
from .results import BsdeSolution, SolverDiagnostics
from .representation import path_terminal_values
from .tree_backward import _picard_step

__all__ = ["BasisSpec", "RegressionPolicy", "solve_lsmc"]

_LAMBDA_FLOOR = 1e-12


@dataclass(frozen=True)
class BasisSpec:
    """Polynomial regression basis: powers of w up to degree, per regime."""

    degree: int = 3
    ridge: float = 1e-8

    def __post_init__(self):
        if not 1 <= self.degree <= 5:
            raise ValidationError(f"basis degree must be in 1..5, got {self.degree}")
        if not self.ridge > 0:
            raise ValidationError("ridge penalty must be positive")

    @property
    def n_functions(self) -> int:
        return self.degree + 1

    def design(self, w: np.ndarray) -> np.ndarray:
        return np.column_stack([w**j for j in range(self.degree + 1)])


@dataclass(frozen=True)
class RegressionPolicy:
    """Fitted per-step control maps, usable on fresh scenarios.

    Coefficient rows are polynomial coefficients in the Brownian level; the
    defaulted regime has no jump exposure, so its K is zero.
    """

    degree: int
    z_pre: tuple[np.ndarray, ...]
    z_post: tuple[np.ndarray, ...]
    k_pre: tuple[np.ndarray, ...]

    def controls(self, i: int, w: np.ndarray, post: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        phi = BasisSpec(degree=self.degree, ridge=1.0).design(w)
        z = np.where(post, phi @ self.z_post[i], phi @ self.z_pre[i])
        k = np.where(post, 0.0, phi @ self.k_pre[i])
        return z, k


def solve_lsmc(
    paths: ScenarioSet,
    driver: DriverSpec,
    claim,
    dividends: DividendProcess | None = None,
    basis: BasisSpec | None = None,
    *,
    implicit: bool = False,
    picard_tol: float = 1e-12,
    picard_max_iter: int = 50,
    store_paths: int = 4096,
) -> BsdeSolution:
    basis = BasisSpec() if basis is None else basis
    dividends = no_dividends() if dividends is None else dividends
    grid = paths.grid
    n = grid.n_steps
    dt = grid.dt
    count = paths.count
    if count < 10 * 2 * basis.n_functions:
        raise ValidationError(
            f"{count} paths for {2 * basis.n_functions} basis functions; "
            "need at least a 10x margin"
        )
    dividends.validate_on(grid)
    step_div = dividends.step_amounts(grid)

    xi = path_terminal_values(paths, claim) + dividends.terminal_jump(grid)
    m = min(store_paths, count)
    y_store: list[np.ndarray] = [np.empty(0)] * (n + 1)
    z_store: list[np.ndarray] = [np.empty(0)] * n
    k_store: list[np.ndarray] = [np.empty(0)] * n
    y_means = [0.0] * (n + 1)
    y_store[n] = xi[:m].copy()
    y_means[n] = float(xi.mean())

    z_pre: list[np.ndarray] = [np.empty(0)] * n
    z_post: list[np.ndarray] = [np.empty(0)] * n
    k_pre: list[np.ndarray] = [np.empty(0)] * n
    zero_coef = np.zeros(basis.n_functions)

    r2_trace: list[float] = []
    ridge_steps: set[int] = set()
    iters = [0] * n
    y0_se = 0.0

    y_next = xi
    w = paths.dw.sum(axis=1)
    for i in range(n - 1, -1, -1):
        w = w - paths.dw[:, i]
        t = float(grid.nodes[i])
        post = paths.post_default_col(i)
        lam = paths.lambda_col(i)
        q = lam * dt[i]
        dn = paths.dn_col(i)
        jump_factor = np.where(q > _LAMBDA_FLOOR, (dn - q) / (q * (1.0 - q) + (q <= _LAMBDA_FLOOR)), 0.0)

        t_e = y_next
        t_z = y_next * paths.dw[:, i] / dt[i]
        t_k = y_next * jump_factor

        ey = np.empty(count)
        ez = np.empty(count)
        ek = np.zeros(count)
        if i == 0:
            # one common state: projections collapse to plain means
            ey[:] = t_e.mean()
            ez[:] = t_z.mean()
            ek[:] = t_k.mean()
            y0_se = float(t_e.std(ddof=1) / np.sqrt(count))
            z_pre[i] = _constant_coef(float(t_z.mean()), basis)
            z_post[i] = zero_coef
            k_pre[i] = _constant_coef(float(t_k.mean()), basis)
        else:
            pre = ~post
            for mask, coef_slot in ((pre, "pre"), (post, "post")):
                rows = int(mask.sum())
                if rows == 0:
                    continue
                phi = basis.design(w[mask])
                ey[mask], _ = _project(phi, t_e[mask], basis, i, r2_trace, ridge_steps)
                ez[mask], zc = _project(phi, t_z[mask], basis, i, r2_trace, ridge_steps)
                if coef_slot == "pre":
                    z_pre[i] = zc
                    ek[mask], kc = _project(phi, t_k[mask], basis, i, r2_trace, ridge_steps)
                    k_pre[i] = kc
                else:
                    z_post[i] = zc
            if z_pre[i].size == 0:
                z_pre[i] = zero_coef
            if z_post[i].size == 0:
                z_post[i] = zero_coef
            if k_pre[i].size == 0:
                k_pre[i] = zero_coef

        if implicit:
            y, iters[i] = _picard_step(
                driver, t, ey, ez, ek, lam, float(dt[i]), float(step_div[i]),
                picard_tol, picard_max_iter, i,
            )
        else:
            y = ey + evaluate(driver, t, ey, ez, ek, lam) * dt[i] + step_div[i]

        y_store[i] = y[:m].copy()
        z_store[i] = ez[:m].copy()
        k_store[i] = ek[:m].copy()
        y_means[i] = float(y.mean())
        y_next = y

    diagnostics = SolverDiagnostics(
        picard_iterations=tuple(iters) if implicit else (),
        regression_r2=tuple(r2_trace),
        ridge_steps=tuple(sorted(ridge_steps)),
        y0_se=y0_se,
        stored_paths=m,
        y_means=tuple(y_means),
    )
    return BsdeSolution(
        method="lsmc",
        grid=grid,
        y=tuple(y_store),
        z=tuple(z_store),
        k=tuple(k_store),
        diagnostics=diagnostics,
        policy=RegressionPolicy(
            degree=basis.degree,
            z_pre=tuple(z_pre),
            z_post=tuple(z_post),
            k_pre=tuple(k_pre),
        ),
    )


def _constant_coef(value: float, basis: BasisSpec) -> np.ndarray:
    coef = np.zeros(basis.n_functions)
    coef[0] = value
    return coef


def _project(
    phi: np.ndarray,
    target: np.ndarray,
    basis: BasisSpec,
    step: int,
    r2_trace: list[float],
    ridge_steps: set[int],
) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares fit with ridge fallback on rank deficiency.

    Regimes too thin to support the basis (fewer than twice the function
    count) are projected on the constant alone; that also counts as a ridge
    event for diagnostics.
    """
    ncols = phi.shape[1]
    if phi.shape[0] < 2 * ncols:
        coef = _constant_coef(float(target.mean()), basis)
        ridge_steps.add(step)
        r2_trace.append(1.0 if np.allclose(target, target.mean()) else 0.0)
        return np.full(phi.shape[0], target.mean()), coef
    gram = phi.T @ phi
    rhs = phi.T @ target
    if np.linalg.matrix_rank(gram) < ncols:
        scale = max(float(np.trace(gram)) / ncols, 1.0)
        coef = np.linalg.solve(gram + basis.ridge * scale * np.eye(ncols), rhs)
        ridge_steps.add(step)
    else:
        coef = np.linalg.solve(gram, rhs)
    pred = phi @ coef
    ss_res = float(((target - pred) ** 2).sum())
    ss_tot = float(((target - target.mean()) ** 2).sum())
    r2_trace.append(1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0)
    return pred, coef
