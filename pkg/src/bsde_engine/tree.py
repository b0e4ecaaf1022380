"""Non-recombining scenario tree for the joint Brownian/default filtration.

Each step multiplies the state: a node that has not defaulted branches into
{W up, W down} x {no default, default} (the default branch is dropped when the
one-step default probability is zero), a defaulted node branches into
{W up, W down}.  Brownian moves are +-sqrt(dt) with probability 1/2 each,
independent of the default branch; the one-step default probability is
lambda(t_i) * dt_i, clipped just below one.  No recombination is attempted:
drivers and claims may depend on path state, and every node keeps its own
path probability and parent link.

For problems that do not depend on the Brownian coordinate at all (claim and
driver constant in w), build_tree(..., brownian=False) drops the W branching:
each surviving node splits only into {no default, default} and the walk
coordinate stays 0.  The node count then grows quadratically instead of
exponentially, which admits fine grids; Z is identically zero there.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import UnsupportedModelError, ValidationError
from .scenarios import NO_DEFAULT, IntensityModel, TimeGrid

__all__ = ["TreeLevel", "ScenarioTree", "build_tree", "MAX_TREE_STEPS"]

MAX_TREE_STEPS = 12
MAX_DEFAULT_ONLY_STEPS = 1024
PROB_CLIP = 1.0 - 1e-9


@dataclass(frozen=True)
class TreeLevel:
    """Node arrays at one grid time, parent-major order.

    child_start[v] is the index of node v's first child in the next level
    (None on the leaf level); parent[v] is the index of v's parent in the
    previous level (None at the root).  Children of one parent are contiguous,
    ordered (W+, no default), (W-, no default), (W+, default), (W-, default),
    with the default pair absent when the node is already defaulted or the
    one-step default probability vanishes, and the W- columns absent on a
    Brownian-degenerate tree.
    """

    t: float
    w: np.ndarray
    default_step: np.ndarray
    prob: np.ndarray
    parent: np.ndarray | None
    child_start: np.ndarray | None

    @property
    def size(self) -> int:
        return self.w.size

    @property
    def alive(self) -> np.ndarray:
        return self.default_step == NO_DEFAULT


@dataclass(frozen=True)
class ScenarioTree:
    grid: TimeGrid
    levels: list[TreeLevel]
    lam: np.ndarray          # pre-default intensity at each t_i, i < n
    p_default: np.ndarray    # clipped one-step default probability
    brownian: bool = True

    @property
    def n_steps(self) -> int:
        return self.grid.n_steps

    @property
    def node_count(self) -> int:
        return sum(level.size for level in self.levels)

    @property
    def leaves(self) -> TreeLevel:
        return self.levels[-1]

    @property
    def n_moves(self) -> int:
        return 2 if self.brownian else 1

    def branching(self, level: int, node: int) -> int:
        if self.levels[level].default_step[node] != NO_DEFAULT:
            return self.n_moves
        return self.n_moves * (2 if self.p_default[level] > 0 else 1)

    def children_of(self, level: int, node: int) -> np.ndarray:
        """Child indices in level + 1."""
        start = int(self.levels[level].child_start[node])
        return np.arange(start, start + self.branching(level, node))

    def step_probabilities(self, level: int, node: int) -> np.ndarray:
        p = self.p_default[level]
        m = self.n_moves
        if self.levels[level].default_step[node] != NO_DEFAULT or p == 0:
            return np.full(m, 1.0 / m)
        return np.concatenate([np.full(m, (1 - p) / m), np.full(m, p / m)])

    def path_to_leaf(self, leaf: int) -> list[int]:
        """Node indices from root to the given leaf, one per level."""
        idx = [leaf]
        for level in range(self.n_steps, 0, -1):
            idx.append(int(self.levels[level].parent[idx[-1]]))
        return idx[::-1]

    def ancestors(self, level: int, at: int | None = None) -> np.ndarray:
        """Index into `level` of each node's ancestor, per node of level `at`.

        Defaults to the leaf level, giving the map leaves -> level.
        """
        at = self.n_steps if at is None else at
        if not 0 <= level <= at <= self.n_steps:
            raise ValidationError(f"need 0 <= level <= at <= {self.n_steps}")
        idx = np.arange(self.levels[at].size)
        for i in range(at, level, -1):
            idx = self.levels[i].parent[idx]
        return idx

    def restrict(self, level: int) -> "ScenarioTree":
        """Subtree of the first `level` steps, with that level as the leaves."""
        if not 0 < level <= self.n_steps:
            raise ValidationError(f"restriction level must be in 1..{self.n_steps}")
        if level == self.n_steps:
            return self
        levels = list(self.levels[: level + 1])
        levels[level] = replace(levels[level], child_start=None)
        return ScenarioTree(
            grid=self.grid.restrict(level),
            levels=levels,
            lam=self.lam[:level],
            p_default=self.p_default[:level],
            brownian=self.brownian,
        )


def build_tree(
    grid: TimeGrid, intensity: IntensityModel, *, brownian: bool = True
) -> ScenarioTree:
    """Build the full tree on the given grid.

    Rejects state-dependent intensities (Monte Carlo only) and grids beyond
    the per-mode step cap, where the non-recombining node count becomes
    unreasonable.
    """
    if intensity.is_state_dependent:
        raise UnsupportedModelError(
            "state-dependent intensity is not representable on the tree backend"
        )
    n = grid.n_steps
    cap = MAX_TREE_STEPS if brownian else MAX_DEFAULT_ONLY_STEPS
    if n > cap:
        raise ValidationError(
            f"tree backend supports at most {cap} steps"
            f"{'' if brownian else ' without Brownian branching'}, got {n}"
        )

    dt = grid.dt
    lam = np.array([intensity.at_time(grid.nodes[i]) for i in range(n)])
    raw_p = lam * dt
    if np.any(raw_p > PROB_CLIP):
        warnings.warn(
            "one-step default probability clipped; refine the grid",
            RuntimeWarning,
            stacklevel=2,
        )
    p_default = np.minimum(raw_p, PROB_CLIP)
    n_moves = 2 if brownian else 1

    # mutable per-level storage: (w, default_step, prob, parent, child_start)
    store: list[list] = [
        [np.zeros(1), np.full(1, NO_DEFAULT, dtype=np.int64), np.ones(1), None, None]
    ]
    for i in range(n):
        w, ds, prob = store[i][0], store[i][1], store[i][2]
        p = float(p_default[i])
        sq = float(np.sqrt(dt[i]))
        moves = (sq, -sq) if brownian else (0.0,)
        alive = ds == NO_DEFAULT
        counts = np.where(alive, n_moves * (2 if p > 0 else 1), n_moves)
        child_start = np.concatenate(([0], np.cumsum(counts)[:-1]))
        store[i][4] = child_start

        total = int(counts.sum())
        nw = np.empty(total)
        nds = np.empty(total, dtype=np.int64)
        nprob = np.empty(total)
        nparent = np.empty(total, dtype=np.int64)

        a_idx = np.nonzero(alive)[0]
        d_idx = np.nonzero(~alive)[0]
        if a_idx.size:
            starts = child_start[a_idx]
            surv = prob[a_idx] * ((1 - p) if p > 0 else 1.0) / n_moves
            for off, move in enumerate(moves):
                nw[starts + off] = w[a_idx] + move
                nds[starts + off] = NO_DEFAULT
                nprob[starts + off] = surv
                nparent[starts + off] = a_idx
            if p > 0:
                dead = prob[a_idx] * p / n_moves
                for off, move in enumerate(moves):
                    nw[starts + n_moves + off] = w[a_idx] + move
                    nds[starts + n_moves + off] = i
                    nprob[starts + n_moves + off] = dead
                    nparent[starts + n_moves + off] = a_idx
        if d_idx.size:
            starts = child_start[d_idx]
            for off, move in enumerate(moves):
                nw[starts + off] = w[d_idx] + move
                nds[starts + off] = ds[d_idx]
                nprob[starts + off] = prob[d_idx] / n_moves
                nparent[starts + off] = d_idx

        store.append([nw, nds, nprob, nparent, None])

    levels = [
        TreeLevel(
            t=float(grid.nodes[i]),
            w=s[0],
            default_step=s[1],
            prob=s[2],
            parent=s[3],
            child_start=s[4],
        )
        for i, s in enumerate(store)
    ]
    leaf_mass = float(levels[-1].prob.sum())
    if abs(leaf_mass - 1.0) > 1e-12:
        raise ValidationError(f"leaf probabilities sum to {leaf_mass}, not 1")
    return ScenarioTree(
        grid=grid, levels=levels, lam=lam, p_default=p_default, brownian=brownian
    )
