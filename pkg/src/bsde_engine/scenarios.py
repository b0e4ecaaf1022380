"""Time grids, default intensities, and Monte Carlo scenario generation.

A scenario describes the two sources of randomness of the model: a Brownian
motion sampled on a deterministic time grid and a single default event whose
arrival is governed by an intensity that vanishes once the default has
occurred.  Default times are drawn by the exponential-threshold (inverse
compensator) method: a unit exponential is compared against the running
trapezoidal integral of the intensity, and the default is placed at the first
grid node where the integral exceeds the draw.  For a constant intensity this
makes the law of the default time exact in the sense that the probability mass
of each grid interval matches the exponential law.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Callable, Iterator
from dataclasses import dataclass, field

import numpy as np

from .exceptions import UnsupportedModelError, ValidationError

__all__ = [
    "TimeGrid",
    "IntensityModel",
    "ScenarioPath",
    "ScenarioSet",
    "build_grid",
    "simulate_paths",
    "iter_path_batches",
    "compensator_residual",
    "ResidualStats",
]

# Paths are generated in fixed-size chunks, each chunk drawing from its own
# counter-based stream keyed by (seed, chunk index).  A path's randomness is a
# fixed row of its chunk, hence a pure function of (seed, path index): output
# is bit-identical no matter how generation is batched or parallelised.
_CHUNK = 4096

NO_DEFAULT = -1


@dataclass(frozen=True)
class TimeGrid:
    """Deterministic grid 0 = t_0 < t_1 < ... < t_n = T."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValidationError("grid needs at least two nodes")
        if nodes[0] != 0.0:
            raise ValidationError("grid must start at t = 0")
        if not np.all(np.diff(nodes) > 0):
            raise ValidationError("grid nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def n_steps(self) -> int:
        return self.nodes.size - 1

    @property
    def horizon(self) -> float:
        return float(self.nodes[-1])

    @property
    def dt(self) -> np.ndarray:
        """Step lengths, shape (n_steps,)."""
        return np.diff(self.nodes)

    def restrict(self, j: int) -> "TimeGrid":
        """Sub-grid of the first j steps."""
        if not 1 <= j <= self.n_steps:
            raise ValidationError(f"cannot restrict grid to {j} steps")
        return TimeGrid(self.nodes[: j + 1].copy())


def build_grid(horizon: float, n_steps: int) -> TimeGrid:
    """Uniform grid with n_steps steps on [0, horizon]."""
    if horizon <= 0:
        raise ValidationError(f"horizon must be positive, got {horizon}")
    if n_steps < 1:
        raise ValidationError(f"n_steps must be >= 1, got {n_steps}")
    return TimeGrid(np.linspace(0.0, horizon, n_steps + 1))


@dataclass(frozen=True)
class IntensityModel:
    """Default intensity before the default time.

    mode is one of "constant", "deterministic" (function of t) or "state"
    (function of (t, brownian level), frozen per step on the Monte Carlo
    backend).  lambda_max is a hard cap used for validation and for the
    admissibility constant of drivers; evaluations outside [0, lambda_max]
    are rejected.
    """

    mode: str
    lambda_max: float
    value: float = 0.0
    fn: Callable[..., object] | None = None

    def __post_init__(self):
        if self.mode not in ("constant", "deterministic", "state"):
            raise ValidationError(f"unknown intensity mode {self.mode!r}")
        if not math.isfinite(self.lambda_max) or self.lambda_max < 0:
            raise ValidationError("lambda_max must be finite and >= 0")
        if self.mode == "constant":
            if not 0 <= self.value <= self.lambda_max:
                raise ValidationError(
                    f"constant intensity {self.value} outside [0, {self.lambda_max}]"
                )
        elif self.fn is None:
            raise ValidationError(f"{self.mode} intensity needs fn")

    @classmethod
    def constant(cls, value: float) -> "IntensityModel":
        return cls(mode="constant", lambda_max=float(value), value=float(value))

    @classmethod
    def deterministic(cls, fn: Callable[[float], float], lambda_max: float) -> "IntensityModel":
        return cls(mode="deterministic", lambda_max=float(lambda_max), fn=fn)

    @classmethod
    def state_dependent(
        cls, fn: Callable[[float, np.ndarray], np.ndarray], lambda_max: float
    ) -> "IntensityModel":
        return cls(mode="state", lambda_max=float(lambda_max), fn=fn)

    @property
    def is_state_dependent(self) -> bool:
        return self.mode == "state"

    def at_time(self, t: float) -> float:
        """Pre-default intensity at time t (constant or deterministic only)."""
        if self.mode == "constant":
            return self.value
        if self.mode == "deterministic":
            return self._check(float(self.fn(t)), t)
        raise UnsupportedModelError(
            "state-dependent intensity has no deterministic time section"
        )

    def at_state(self, t: float, w: np.ndarray) -> np.ndarray:
        """Pre-default intensity at time t given Brownian levels w."""
        if self.mode == "state":
            out = np.broadcast_to(np.asarray(self.fn(t, w), dtype=float), w.shape)
            bad = ~np.isfinite(out) | (out < 0) | (out > self.lambda_max)
            if bad.any():
                raise ValidationError(
                    f"intensity at t={t} left [0, {self.lambda_max}] "
                    f"on {int(bad.sum())} states"
                )
            return out
        return np.full(np.shape(w), self.at_time(t))

    def node_values(self, grid: TimeGrid) -> np.ndarray:
        """Intensity at every grid node, shape (n_steps + 1,)."""
        return np.array([self.at_time(t) for t in grid.nodes])

    def _check(self, v: float, t: float) -> float:
        if not math.isfinite(v) or v < 0 or v > self.lambda_max:
            raise ValidationError(
                f"intensity {v} at t={t} outside [0, {self.lambda_max}]"
            )
        return v


@dataclass(frozen=True)
class ScenarioSet:
    """Vectorised bundle of simulated paths on a common grid.

    dw has shape (count, n_steps).  default_step[p] is the index of the step
    during which path p defaults (the default time is the right node of that
    step) or NO_DEFAULT.  lam holds the pre-default intensity at the left node
    of every step: shape (n_steps,) when the intensity is deterministic in
    time, (count, n_steps) when it is state-dependent.  The effective per-path
    intensity at step i is lam masked to zero strictly after default_step.
    """

    grid: TimeGrid
    dw: np.ndarray
    default_step: np.ndarray
    lam: np.ndarray
    seed: int

    @property
    def count(self) -> int:
        return self.dw.shape[0]

    @property
    def n_steps(self) -> int:
        return self.grid.n_steps

    @property
    def defaulted(self) -> np.ndarray:
        """Whether each path defaults on [0, T]."""
        return self.default_step != NO_DEFAULT

    def lambda_col(self, i: int) -> np.ndarray:
        """Effective intensity at t_i per path (zero strictly after default)."""
        base = self.lam[:, i] if self.lam.ndim == 2 else self.lam[i]
        alive = (self.default_step == NO_DEFAULT) | (i <= self.default_step)
        return np.where(alive, base, 0.0)

    def dn_col(self, i: int) -> np.ndarray:
        return (self.default_step == i).astype(float)

    def dm_col(self, i: int) -> np.ndarray:
        return self.dn_col(i) - self.lambda_col(i) * self.grid.dt[i]

    def post_default_col(self, i: int) -> np.ndarray:
        """True where the default happened strictly before t_i."""
        return (self.default_step != NO_DEFAULT) & (self.default_step < i)

    def brownian_nodes(self) -> np.ndarray:
        """Brownian levels at the grid nodes, shape (count, n_steps + 1)."""
        w = np.empty((self.count, self.n_steps + 1))
        w[:, 0] = 0.0
        np.cumsum(self.dw, axis=1, out=w[:, 1:])
        return w

    def lambda_matrix(self) -> np.ndarray:
        return np.column_stack([self.lambda_col(i) for i in range(self.n_steps)])

    def dn_matrix(self) -> np.ndarray:
        out = np.zeros((self.count, self.n_steps))
        hit = self.default_step != NO_DEFAULT
        out[np.nonzero(hit)[0], self.default_step[hit]] = 1.0
        return out

    def dm_matrix(self) -> np.ndarray:
        return self.dn_matrix() - self.lambda_matrix() * self.grid.dt

    def path(self, p: int) -> "ScenarioPath":
        if not 0 <= p < self.count:
            raise ValidationError(f"path index {p} out of range")
        lam = self.lam[p] if self.lam.ndim == 2 else self.lam
        return ScenarioPath(
            grid=self.grid,
            dw=self.dw[p].copy(),
            default_step=int(self.default_step[p]),
            lam_base=lam.copy(),
            seed=self.seed,
            index=p,
        )

    def to_csv(self, path: str) -> None:
        """Write per-(path, step) increments; intended for small sets."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["path", "step", "t", "dt", "dW", "dN", "lambda", "dM"])
            dt = self.grid.dt
            for i in range(self.n_steps):
                lam = self.lambda_col(i)
                dn = self.dn_col(i)
                dm = dn - lam * dt[i]
                for p in range(self.count):
                    writer.writerow(
                        [
                            p,
                            i,
                            _fmt(self.grid.nodes[i]),
                            _fmt(dt[i]),
                            _fmt(self.dw[p, i]),
                            _fmt(dn[p]),
                            _fmt(lam[p]),
                            _fmt(dm[p]),
                        ]
                    )


@dataclass(frozen=True)
class ScenarioPath:
    """Single-path view with the same step conventions as ScenarioSet."""

    grid: TimeGrid
    dw: np.ndarray
    default_step: int
    lam_base: np.ndarray
    seed: int
    index: int = 0

    @property
    def n_steps(self) -> int:
        return self.grid.n_steps

    @property
    def defaulted(self) -> bool:
        return self.default_step != NO_DEFAULT

    def lambdas(self) -> np.ndarray:
        """Effective intensity at the left node of every step."""
        steps = np.arange(self.n_steps)
        alive = (self.default_step == NO_DEFAULT) | (steps <= self.default_step)
        return np.where(alive, self.lam_base[: self.n_steps], 0.0)

    def dn(self) -> np.ndarray:
        out = np.zeros(self.n_steps)
        if self.defaulted:
            out[self.default_step] = 1.0
        return out

    def dm(self) -> np.ndarray:
        return self.dn() - self.lambdas() * self.grid.dt


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _chunk_draws(seed: int, chunk_index: int, n_steps: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.Generator(np.random.Philox(key=[seed, chunk_index]))
    normals = rng.standard_normal((_CHUNK, n_steps))
    exponentials = rng.standard_exponential(_CHUNK)
    return normals, exponentials


def simulate_paths(
    grid: TimeGrid,
    intensity: IntensityModel,
    count: int,
    seed: int,
    *,
    path_offset: int = 0,
) -> ScenarioSet:
    """Simulate count paths of (Brownian increments, default time).

    The default time is placed at the first grid node where the cumulative
    trapezoidal integral of the intensity exceeds a unit exponential draw.
    path_offset shifts the global path indices, so a large ensemble can be
    produced in consecutive batches that concatenate to the unbatched result.

    Bit-identical output is guaranteed for identical
    (grid, intensity, count, seed, path_offset).
    """
    if count < 1:
        raise ValidationError(f"count must be >= 1, got {count}")
    if path_offset < 0 or path_offset % _CHUNK:
        raise ValidationError(f"path_offset must be a multiple of {_CHUNK}")
    if seed < 0 or seed > 2**63 - 1:
        raise ValidationError("seed must fit in a non-negative 64-bit integer")

    n = grid.n_steps
    dt = grid.dt
    sqrt_dt = np.sqrt(dt)
    first_chunk = path_offset // _CHUNK
    n_chunks = -(-count // _CHUNK)

    dw = np.empty((count, n))
    thresholds = np.empty(count)
    for c in range(n_chunks):
        normals, exps = _chunk_draws(seed, first_chunk + c, n)
        lo = c * _CHUNK
        hi = min(lo + _CHUNK, count)
        dw[lo:hi] = normals[: hi - lo] * sqrt_dt
        thresholds[lo:hi] = exps[: hi - lo]

    if intensity.is_state_dependent:
        lam, default_step = _threshold_state(grid, intensity, dw, thresholds)
    else:
        node_lam = intensity.node_values(grid)
        cum = np.concatenate(
            ([0.0], np.cumsum(0.5 * (node_lam[:-1] + node_lam[1:]) * dt))
        )
        # first node with cumulative integral strictly above the draw
        j = np.searchsorted(cum, thresholds, side="right")
        default_step = np.where(j <= n, j - 1, NO_DEFAULT).astype(np.int64)
        lam = node_lam[:n]

    return ScenarioSet(
        grid=grid, dw=dw, default_step=default_step, lam=lam, seed=seed
    )


def _threshold_state(
    grid: TimeGrid,
    intensity: IntensityModel,
    dw: np.ndarray,
    thresholds: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Frozen-coefficient threshold crossing for state-dependent intensity."""
    count, n = dw.shape
    lam = np.empty((count, n))
    default_step = np.full(count, NO_DEFAULT, dtype=np.int64)
    w = np.zeros(count)
    cum = np.zeros(count)
    prev = intensity.at_state(grid.nodes[0], w)
    for i in range(n):
        lam[:, i] = prev
        w = w + dw[:, i]
        cur = intensity.at_state(grid.nodes[i + 1], w)
        cum = cum + 0.5 * (prev + cur) * grid.dt[i]
        newly = (default_step == NO_DEFAULT) & (cum > thresholds)
        default_step[newly] = i
        prev = cur
    return lam, default_step


def iter_path_batches(
    grid: TimeGrid,
    intensity: IntensityModel,
    count: int,
    seed: int,
    batch: int = 65536,
) -> Iterator[ScenarioSet]:
    """Yield the ensemble in batches identical to one simulate_paths call."""
    if batch < _CHUNK or batch % _CHUNK:
        raise ValidationError(f"batch must be a positive multiple of {_CHUNK}")
    done = 0
    while done < count:
        take = min(batch, count - done)
        yield simulate_paths(
            grid, intensity, take, seed, path_offset=done
        )
        done += take


@dataclass(frozen=True)
class ResidualStats:
    mean: float
    se: float
    count: int
    residuals: np.ndarray | None = field(default=None, repr=False)

    @property
    def within_3se(self) -> bool:
        return abs(self.mean) <= 3.0 * self.se


def compensator_residual(paths: ScenarioSet, keep: bool = False) -> ResidualStats:
    """Terminal residual M_T = N_T - sum_i lambda_i dt_i per path.

    Under exact sampling the residual has mean zero up to an O(dt)
    discretisation remainder; mean and standard error let callers run the
    3-sigma martingale check at whatever scale they simulated.
    """
    dt = paths.grid.dt
    comp = np.zeros(paths.count)
    for i in range(paths.n_steps):
        comp += paths.lambda_col(i) * dt[i]
    res = paths.defaulted.astype(float) - comp
    se = float(res.std(ddof=1) / math.sqrt(paths.count)) if paths.count > 1 else 0.0
    return ResidualStats(
        mean=float(res.mean()),
        se=se,
        count=paths.count,
        residuals=res if keep else None,
    )
