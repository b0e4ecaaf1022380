"""Solution containers shared by the solver backends."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..scenarios import TimeGrid

__all__ = ["SolverDiagnostics", "BsdeSolution"]


@dataclass(frozen=True)
class SolverDiagnostics:
    """Per-run health indicators.

    picard_iterations has one entry per time step for backends that solve the
    implicit one-step equation; regression_r2 and ridge_steps apply to the
    regression backend only.  stored_paths is the size of the per-path sample
    kept in the solution when the full ensemble would not fit.
    """

    picard_iterations: tuple[int, ...] = ()
    regression_r2: tuple[float, ...] = ()
    ridge_steps: tuple[int, ...] = ()
    terminal_residual: float = 0.0
    y0_se: float | None = None
    stored_paths: int | None = None
    y_means: tuple[float, ...] = ()

    @property
    def max_picard_iterations(self) -> int:
        return max(self.picard_iterations, default=0)

    @property
    def min_regression_r2(self) -> float | None:
        return min(self.regression_r2, default=None)


@dataclass(frozen=True)
class BsdeSolution:
    """Backward solution triple on a grid.

    y[i], z[i], k[i] hold the values at step i: one entry per tree node of
    level i, or one per retained path.  y has n_steps + 1 entries (terminal
    values included), z and k have n_steps.
    """

    method: str
    grid: TimeGrid
    y: tuple[np.ndarray, ...]
    z: tuple[np.ndarray, ...]
    k: tuple[np.ndarray, ...]
    diagnostics: SolverDiagnostics = field(default_factory=SolverDiagnostics)
    policy: object | None = None

    def __post_init__(self):
        n = self.grid.n_steps
        if len(self.y) != n + 1 or len(self.z) != n or len(self.k) != n:
            raise ValueError("solution arrays do not match the grid")

    @property
    def y0(self) -> float:
        return float(self.y[0][0])

    @property
    def n_steps(self) -> int:
        return self.grid.n_steps

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["node_or_path", "step", "t", "Y", "Z", "K"])
            for i in range(self.n_steps + 1):
                t = self.grid.nodes[i]
                terminal = i == self.n_steps
                for v in range(self.y[i].size):
                    writer.writerow(
                        [
                            v,
                            i,
                            _fmt(t),
                            _fmt(self.y[i][v]),
                            "" if terminal else _fmt(self.z[i][v]),
                            "" if terminal else _fmt(self.k[i][v]),
                        ]
                    )


def _fmt(x: float) -> str:
    return format(float(x), ".17g")
