"""Multiplicative adjoint processes and measure-change weights.

Both discrete forms of the stochastic exponential driven by (W, M) are
provided:

  exponential  G_{i+1} = G_i exp(delta dt - beta^2 dt / 2 + beta dW
                                 - gamma lam dt) (1 + gamma dN)
  affine       G_{i+1} = G_i (1 + delta dt + beta dW + gamma dM)

The exponential form is nonnegative whenever gamma >= -1 and is the one used
for Monte Carlo reweighting; the affine form is the per-step martingale
factor (E[factor] = 1 + delta dt exactly on the tree increments) and is kept
for cross-checks.  Negative affine values on coarse grids are legitimate and
never clipped.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from .drivers import CoefficientFn
from .exceptions import ValidationError
from .scenarios import ScenarioPath, ScenarioSet

__all__ = [
    "AdjointPath",
    "MartingaleCheck",
    "ReweightEstimate",
    "adjoint_step_factors",
    "adjoint_matrix",
    "doleans_dade",
    "terminal_adjoint",
    "check_martingale",
    "girsanov_reweight",
]

_FORMS = ("exponential", "affine")


@dataclass(frozen=True)
class AdjointPath:
    """Adjoint values along one path from a start index onward.

    values[j] is G at grid node start + j, with values[0] = 1.
    """

    start: int
    form: str
    values: np.ndarray


@dataclass(frozen=True)
class MartingaleCheck:
    mean: float
    se: float
    count: int

    @property
    def passed(self) -> bool:
        return abs(self.mean - 1.0) < 3.0 * self.se


@dataclass(frozen=True)
class ReweightEstimate:
    estimate: float
    se: float
    count: int


def _as_step_values(c, grid_times: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Coefficient input -> (count, n) array; accepts constants, functions of
    the left node time, or ready-made (n,) / (count, n) arrays."""
    n = shape[1]
    if callable(c):
        row = np.array([float(c(float(t))) for t in grid_times[:n]])
        return np.broadcast_to(row, shape)
    arr = np.asarray(c, dtype=float)
    if arr.ndim == 0:
        return np.broadcast_to(arr, shape)
    if arr.ndim == 1:
        if arr.shape[0] != n:
            raise ValidationError(f"coefficient array has {arr.shape[0]} steps, grid has {n}")
        return np.broadcast_to(arr, shape)
    if arr.shape != shape:
        raise ValidationError(f"coefficient array shape {arr.shape} != {shape}")
    return arr


def adjoint_step_factors(
    batch: ScenarioSet,
    delta: CoefficientFn | np.ndarray = 0.0,
    beta: CoefficientFn | np.ndarray = 0.0,
    gamma: CoefficientFn | np.ndarray = 0.0,
    *,
    form: str = "exponential",
) -> np.ndarray:
    """Per-step multiplicative factors, shape (count, n_steps)."""
    if form not in _FORMS:
        raise ValidationError(f"unknown adjoint form {form!r}")
    grid = batch.grid
    shape = (batch.dw.shape[0], grid.n_steps)
    d = _as_step_values(delta, grid.nodes, shape)
    b = _as_step_values(beta, grid.nodes, shape)
    g = _as_step_values(gamma, grid.nodes, shape)
    dt = grid.dt
    lam = batch.lambda_matrix()
    dn = batch.dn_matrix()
    if form == "affine":
        dm = dn - lam * dt
        return 1.0 + d * dt + b * batch.dw + g * dm
    cont = np.exp((d - 0.5 * b * b - g * lam) * dt + b * batch.dw)
    return cont * (1.0 + g * dn)


def adjoint_matrix(
    batch: ScenarioSet,
    delta: CoefficientFn | np.ndarray = 0.0,
    beta: CoefficientFn | np.ndarray = 0.0,
    gamma: CoefficientFn | np.ndarray = 0.0,
    *,
    start: int = 0,
    form: str = "exponential",
) -> np.ndarray:
    """Adjoint values at nodes start..n, shape (count, n-start+1); column 0 is 1."""
    n = batch.grid.n_steps
    if not 0 <= start <= n:
        raise ValidationError(f"start index {start} outside 0..{n}")
    factors = adjoint_step_factors(batch, delta, beta, gamma, form=form)
    count = factors.shape[0]
    out = np.empty((count, n - start + 1))
    out[:, 0] = 1.0
    np.cumprod(factors[:, start:], axis=1, out=out[:, 1:])
    return out


def doleans_dade(
    path: ScenarioPath,
    delta: CoefficientFn | np.ndarray = 0.0,
    beta: CoefficientFn | np.ndarray = 0.0,
    gamma: CoefficientFn | np.ndarray = 0.0,
    *,
    start: int = 0,
    form: str = "exponential",
) -> AdjointPath:
    """Single-path adjoint from a start node onward."""
    batch = ScenarioSet(
        grid=path.grid,
        dw=path.dw[None, :],
        default_step=np.array([path.default_step], dtype=np.int64),
        lam=path.lam_base,
        seed=path.seed,
    )
    values = adjoint_matrix(batch, delta, beta, gamma, start=start, form=form)[0]
    return AdjointPath(start=start, form=form, values=values)


def terminal_adjoint(
    batch: ScenarioSet,
    delta: CoefficientFn | np.ndarray = 0.0,
    beta: CoefficientFn | np.ndarray = 0.0,
    gamma: CoefficientFn | np.ndarray = 0.0,
    *,
    form: str = "exponential",
) -> np.ndarray:
    """Terminal adjoint per path, accumulated column-wise to spare memory."""
    if form not in _FORMS:
        raise ValidationError(f"unknown adjoint form {form!r}")
    grid = batch.grid
    count, n = batch.dw.shape
    shape = (1, n)
    d = _as_step_values(delta, grid.nodes, shape)[0]
    b = _as_step_values(beta, grid.nodes, shape)[0]
    g = _as_step_values(gamma, grid.nodes, shape)[0]
    dt = grid.dt
    acc = np.ones(count)
    for i in range(n):
        lam = batch.lambda_col(i)
        dn = batch.dn_col(i)
        dwi = batch.dw[:, i]
        if form == "affine":
            acc *= 1.0 + d[i] * dt[i] + b[i] * dwi + g[i] * (dn - lam * dt[i])
        else:
            acc *= np.exp((d[i] - 0.5 * b[i] * b[i] - g[i] * lam) * dt[i] + b[i] * dwi)
            acc *= 1.0 + g[i] * dn
    return acc


def check_martingale(terminal_values: np.ndarray) -> MartingaleCheck:
    """Unit-mean test statistic for an ensemble of terminal adjoint values."""
    vals = np.asarray(terminal_values, dtype=float)
    if vals.ndim != 1 or vals.size < 2:
        raise ValidationError("martingale check needs a flat ensemble of >= 2 values")
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(vals.size))
    return MartingaleCheck(mean=mean, se=se, count=vals.size)


def girsanov_reweight(weights: np.ndarray, values: np.ndarray) -> ReweightEstimate:
    """Estimate the reweighted mean E_Q[F] from per-path densities and
    functional values."""
    w = np.asarray(weights, dtype=float)
    v = np.asarray(values, dtype=float)
    if w.shape != v.shape or w.ndim != 1:
        raise ValidationError(f"ensembles are misaligned: {w.shape} vs {v.shape}")
    if w.size < 2:
        raise ValidationError("reweighting needs >= 2 paths")
    prod = w * v
    return ReweightEstimate(
        estimate=float(prod.mean()),
        se=float(prod.std(ddof=1) / np.sqrt(prod.size)),
        count=prod.size,
    )
