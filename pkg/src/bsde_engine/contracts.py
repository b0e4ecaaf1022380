"""Terminal claims and dividend streams.

A claim maps the terminal state of a scenario (Brownian endpoint, default
flag, asset prices) to a payout.  A dividend stream is deterministic finite
variation: an absolutely continuous rate plus discrete jumps, credited to the
holder between inception and the horizon.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .drivers import CoefficientFn, coefficient_at
from .exceptions import ValidationError
from .expressions import compile_expression
from .scenarios import TimeGrid

__all__ = [
    "TerminalState",
    "ClaimSpec",
    "DividendProcess",
    "constant_claim",
    "call_claim",
    "put_claim",
    "default_digital_claim",
    "expression_claim",
    "claim_from_function",
    "no_dividends",
    "add_dividends",
    "scale_dividends",
    "combine_claims",
]

_CLAIM_VARS = ("w", "n", "s1", "s2")

# nodes/weights of 5-point Gauss-Legendre on [-1, 1]
_GL_X = np.array([
    -0.9061798459386640, -0.5384693101056831, 0.0,
    0.5384693101056831, 0.9061798459386640,
])
_GL_W = np.array([
    0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
    0.4786286704993665, 0.2369268850561891,
])


@dataclass(frozen=True)
class TerminalState:
    """Horizon snapshot of a scenario batch.

    Asset columns are optional; claims that reference them raise when absent.
    """

    w: np.ndarray
    defaulted: np.ndarray
    s0: np.ndarray | None = None
    s1: np.ndarray | None = None
    s2: np.ndarray | None = None

    def __post_init__(self):
        if self.w.shape != self.defaulted.shape:
            raise ValidationError("terminal state columns must share one shape")

    @property
    def n(self) -> np.ndarray:
        return self.defaulted.astype(float)


@dataclass(frozen=True)
class ClaimSpec:
    """Terminal payout ξ as a function of the terminal state."""

    kind: str
    payoff: Callable[[TerminalState], np.ndarray] = field(repr=False)
    uses_assets: bool = False
    description: str = ""

    def __call__(self, state: TerminalState) -> np.ndarray:
        if self.uses_assets and state.s1 is None:
            raise ValidationError(
                f"claim {self.kind!r} needs asset prices; attach a market model"
            )
        out = np.asarray(self.payoff(state), dtype=float)
        if out.shape != state.w.shape:
            out = np.broadcast_to(out, state.w.shape).copy()
        if not np.isfinite(out).all():
            raise ValidationError(f"claim {self.kind!r} produced non-finite payout")
        return out

    def sample_second_moment(self, state: TerminalState) -> float:
        vals = self(state)
        return float(np.mean(vals * vals))


def constant_claim(value: float) -> ClaimSpec:
    if not math.isfinite(value):
        raise ValidationError("claim value must be finite")
    return ClaimSpec(kind="constant", payoff=lambda s: np.full_like(s.w, value))


def call_claim(strike: float) -> ClaimSpec:
    """(S1_T - strike)^+."""
    return ClaimSpec(
        kind="call",
        payoff=lambda s: np.maximum(s.s1 - strike, 0.0),
        uses_assets=True,
        description=f"call strike {strike}",
    )


def put_claim(strike: float) -> ClaimSpec:
    return ClaimSpec(
        kind="put",
        payoff=lambda s: np.maximum(strike - s.s1, 0.0),
        uses_assets=True,
        description=f"put strike {strike}",
    )


def default_digital_claim() -> ClaimSpec:
    """Pays 1 if default occurred by the horizon, else 0."""
    return ClaimSpec(kind="default_digital", payoff=lambda s: s.n)


def expression_claim(source: str) -> ClaimSpec:
    """Claim from an expression over (w, n, s1, s2) at the horizon."""
    expr = compile_expression(source, list(_CLAIM_VARS))
    uses_assets = bool({"s1", "s2"} & set(expr.used_variables))

    def payoff(s: TerminalState) -> np.ndarray:
        zeros = np.zeros_like(s.w)
        return expr(
            w=s.w,
            n=s.n,
            s1=s.s1 if s.s1 is not None else zeros,
            s2=s.s2 if s.s2 is not None else zeros,
        )

    return ClaimSpec(
        kind="expression", payoff=payoff, uses_assets=uses_assets, description=source
    )


def claim_from_function(
    fn: Callable[[TerminalState], np.ndarray],
    *,
    uses_assets: bool = False,
    description: str = "",
) -> ClaimSpec:
    return ClaimSpec(
        kind="custom", payoff=fn, uses_assets=uses_assets, description=description
    )


@dataclass(frozen=True)
class DividendProcess:
    """Deterministic cumulative payout stream, zero at time 0.

    rate integrates over time; jumps are (time, amount) pairs with times in
    (0, horizon].  With non_decreasing set, the stream is validated to be a
    cumulative-income process (rate >= 0, jumps >= 0); otherwise it is general
    finite variation and amounts may take either sign.
    """

    rate: CoefficientFn = 0.0
    jumps: tuple[tuple[float, float], ...] = ()
    non_decreasing: bool = False

    def __post_init__(self):
        jumps = tuple((float(t), float(a)) for t, a in self.jumps)
        object.__setattr__(self, "jumps", jumps)
        for t, a in jumps:
            if not (math.isfinite(t) and math.isfinite(a)):
                raise ValidationError("dividend jumps must be finite")
            if t <= 0:
                raise ValidationError("dividend jump times must be positive")
            if self.non_decreasing and a < 0:
                raise ValidationError("non-decreasing stream has a negative jump")

    @property
    def is_zero(self) -> bool:
        return not self.jumps and not callable(self.rate) and float(self.rate) == 0.0

    def rate_at(self, t: float) -> float:
        return coefficient_at(self.rate, t)

    def validate_on(self, grid: TimeGrid) -> None:
        horizon = grid.horizon
        for t, _ in self.jumps:
            if t > horizon + 1e-12:
                raise ValidationError(f"dividend jump at {t} is beyond the horizon {horizon}")
        if self.non_decreasing:
            for t in np.linspace(0.0, horizon, 101):
                if self.rate_at(float(t)) < 0:
                    raise ValidationError(
                        f"non-decreasing stream has negative rate at t={float(t):g}"
                    )

    def step_amounts(self, grid: TimeGrid) -> np.ndarray:
        """Mass over (t_i, t_{i+1}] per step; a jump at exactly the horizon is
        excluded here and surfaces through terminal_jump instead."""
        nodes = grid.nodes
        n = grid.n_steps
        out = np.empty(n)
        for i in range(n):
            out[i] = self._rate_integral(nodes[i], nodes[i + 1])
        for t, a in self.jumps:
            if t >= grid.horizon - 1e-12:
                continue
            # credited to the step whose half-open interval (t_i, t_{i+1}] holds t
            i = int(np.searchsorted(nodes, t - 1e-12, side="left")) - 1
            out[min(max(i, 0), n - 1)] += a
        return out

    def terminal_jump(self, grid: TimeGrid) -> float:
        return sum(a for t, a in self.jumps if t >= grid.horizon - 1e-12)

    def total(self, grid: TimeGrid) -> float:
        return float(self.step_amounts(grid).sum() + self.terminal_jump(grid))

    def _rate_integral(self, a: float, b: float) -> float:
        if not callable(self.rate):
            return float(self.rate) * (b - a)
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        vals = np.array([self.rate(float(mid + half * x)) for x in _GL_X])
        return float(half * np.dot(_GL_W, vals))


def no_dividends() -> DividendProcess:
    return DividendProcess()


def add_dividends(d1: DividendProcess, d2: DividendProcess) -> DividendProcess:
    """Superposition of two streams; used by the linearity checks."""
    r1, r2 = d1.rate, d2.rate
    if callable(r1) or callable(r2):
        rate = lambda t: coefficient_at(r1, t) + coefficient_at(r2, t)
    else:
        rate = float(r1) + float(r2)
    return DividendProcess(
        rate=rate,
        jumps=d1.jumps + d2.jumps,
        non_decreasing=d1.non_decreasing and d2.non_decreasing,
    )


def scale_dividends(d: DividendProcess, factor: float) -> DividendProcess:
    if not math.isfinite(factor):
        raise ValidationError("scale factor must be finite")
    r = d.rate
    rate = (lambda t: factor * r(t)) if callable(r) else factor * float(r)
    return DividendProcess(
        rate=rate,
        jumps=tuple((t, factor * a) for t, a in d.jumps),
        non_decreasing=d.non_decreasing and factor >= 0,
    )


def combine_claims(
    a: ClaimSpec, b: ClaimSpec, wa: float = 1.0, wb: float = 1.0
) -> ClaimSpec:
    """Pointwise wa * a + wb * b on the same terminal state."""
    return ClaimSpec(
        kind="combined",
        payoff=lambda s: wa * a(s) + wb * b(s),
        uses_assets=a.uses_assets or b.uses_assets,
        description=f"{wa:g}*({a.kind}) + {wb:g}*({b.kind})",
    )
