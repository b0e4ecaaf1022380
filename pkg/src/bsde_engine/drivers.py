"""Driver specifications and the admissibility verifier.

A driver is the generator g(t, y, z, k) of the backward equation; k multiplies
the compensated default martingale, so admissibility is Lipschitz continuity
with the jump argument weighted by sqrt(lambda_t):

    |g(t, y1, z1, k1) - g(t, y2, z2, k2)|
        <= C (|y1 - y2| + |z1 - z2| + sqrt(lambda_t) |k1 - k2|)

Every DriverSpec declares its constant C; verify_admissibility probes the
declaration by sampling.  After default (lambda_t = 0) the k argument is
inert: evaluate() substitutes k = 0 there, which makes custom drivers comply
by construction.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ValidationError
from .expressions import compile_expression

__all__ = [
    "CoefficientFn",
    "LinearCoefficients",
    "DriverSpec",
    "AdmissibilityReport",
    "zero_driver",
    "lambda_linear",
    "perfect_market_driver",
    "large_investor_driver",
    "custom_driver",
    "expression_driver",
    "evaluate",
    "verify_admissibility",
]

CoefficientFn = float | int | Callable[[float], float]


def coefficient_at(c: CoefficientFn, t: float) -> float:
    return float(c(t)) if callable(c) else float(c)


def coefficient_bound(c: CoefficientFn, times: np.ndarray) -> float:
    if callable(c):
        return float(max(abs(c(float(t))) for t in times))
    return abs(float(c))


@dataclass(frozen=True)
class LinearCoefficients:
    """Coefficients of g = phi + delta y + beta z + gamma k lambda.

    Each entry is a constant or a function of time.  The *_post fields
    override their counterpart on the post-default regime; left as None the
    coefficient is regime-independent.  gamma needs no override because it
    multiplies lambda, which vanishes after default.
    """

    phi: CoefficientFn = 0.0
    delta: CoefficientFn = 0.0
    beta: CoefficientFn = 0.0
    gamma: CoefficientFn = 0.0
    phi_post: CoefficientFn | None = None
    delta_post: CoefficientFn | None = None
    beta_post: CoefficientFn | None = None

    def at(self, t: float, defaulted: bool = False) -> tuple[float, float, float, float]:
        phi, delta, beta = self.phi, self.delta, self.beta
        if defaulted:
            phi = self.phi_post if self.phi_post is not None else phi
            delta = self.delta_post if self.delta_post is not None else delta
            beta = self.beta_post if self.beta_post is not None else beta
        return (
            coefficient_at(phi, t),
            coefficient_at(delta, t),
            coefficient_at(beta, t),
            coefficient_at(self.gamma, t),
        )


@dataclass(frozen=True)
class DriverSpec:
    """Generator with a declared admissibility constant.

    fn has signature fn(t, y, z, k, lam) with scalar t and numpy-broadcastable
    remaining arguments.
    """

    variant: str
    fn: Callable[..., np.ndarray] = field(repr=False)
    lipschitz: float
    linear: LinearCoefficients | None = None
    description: str = ""

    def __post_init__(self):
        if not math.isfinite(self.lipschitz) or self.lipschitz < 0:
            raise ValidationError("lipschitz constant must be finite and >= 0")

    @property
    def is_lambda_linear(self) -> bool:
        return self.linear is not None


def evaluate(driver: DriverSpec, t: float, y, z, k, lam) -> np.ndarray:
    """Evaluate g at (t, y, z, k) with intensity lam; k is zeroed where lam = 0."""
    y, z, k, lam = (np.asarray(a, dtype=float) for a in (y, z, k, lam))
    for name, a in (("y", y), ("z", z), ("k", k), ("lam", lam)):
        if not np.isfinite(a).all():
            raise ValidationError(f"non-finite driver input {name}")
    if (lam < 0).any():
        raise ValidationError("negative intensity passed to driver")
    k_eff = np.where(lam > 0, k, 0.0)
    out = np.asarray(driver.fn(t, y, z, k_eff, lam), dtype=float)
    if not np.isfinite(out).all():
        raise ValidationError(f"driver {driver.variant!r} produced non-finite values at t={t}")
    return out


def zero_driver() -> DriverSpec:
    return DriverSpec(variant="zero", fn=lambda t, y, z, k, lam: np.zeros(np.broadcast(y, z, k, lam).shape), lipschitz=0.0, linear=LinearCoefficients())


def lambda_linear(
    phi: CoefficientFn = 0.0,
    delta: CoefficientFn = 0.0,
    beta: CoefficientFn = 0.0,
    gamma: CoefficientFn = 0.0,
    *,
    lambda_max: float,
    times: np.ndarray | None = None,
    phi_post: CoefficientFn | None = None,
    delta_post: CoefficientFn | None = None,
    beta_post: CoefficientFn | None = None,
) -> DriverSpec:
    """Driver g = phi(t) + delta(t) y + beta(t) z + gamma(t) k lambda_t.

    The admissibility constant is max(sup|delta|, sup|beta|,
    sup|gamma| sqrt(lambda_max)); sup over the sampled times for callable
    coefficients.  The *_post arguments switch a coefficient on the
    post-default regime.
    """
    coeffs = LinearCoefficients(
        phi=phi,
        delta=delta,
        beta=beta,
        gamma=gamma,
        phi_post=phi_post,
        delta_post=delta_post,
        beta_post=beta_post,
    )
    ts = np.linspace(0.0, 1.0, 65) if times is None else np.asarray(times, dtype=float)
    c = linear_lipschitz(coeffs, lambda_max, ts)
    return DriverSpec(
        variant="lambda_linear", fn=linear_fn(coeffs), lipschitz=c, linear=coeffs
    )


def linear_lipschitz(
    coeffs: LinearCoefficients, lambda_max: float, times: np.ndarray
) -> float:
    bounds = [
        coefficient_bound(coeffs.delta, times),
        coefficient_bound(coeffs.beta, times),
        coefficient_bound(coeffs.gamma, times) * math.sqrt(lambda_max),
    ]
    if coeffs.delta_post is not None:
        bounds.append(coefficient_bound(coeffs.delta_post, times))
    if coeffs.beta_post is not None:
        bounds.append(coefficient_bound(coeffs.beta_post, times))
    return max(bounds)


def linear_fn(coeffs: LinearCoefficients) -> Callable[..., np.ndarray]:
    # lam = 0 marks the post-default regime for coefficient selection
    regime_split = any(
        c is not None for c in (coeffs.phi_post, coeffs.delta_post, coeffs.beta_post)
    )

    def fn(t, y, z, k, lam):
        p, d, b, g = coeffs.at(t, defaulted=False)
        if not regime_split:
            return p + d * y + b * z + g * k * lam
        pq, dq, bq, _ = coeffs.at(t, defaulted=True)
        alive = np.asarray(lam) > 0
        return (
            np.where(alive, p, pq)
            + np.where(alive, d, dq) * y
            + np.where(alive, b, bq) * z
            + g * k * lam
        )

    return fn


def perfect_market_driver(
    r: CoefficientFn,
    theta1: CoefficientFn,
    theta2: CoefficientFn,
    *,
    lambda_max: float,
    times: np.ndarray | None = None,
) -> DriverSpec:
    """Linear pricing driver g = -r y - theta1 z - theta2 lambda k."""
    ts = np.linspace(0.0, 1.0, 65) if times is None else np.asarray(times, dtype=float)
    spec = lambda_linear(
        phi=0.0,
        delta=_negate(r),
        beta=_negate(theta1),
        gamma=_negate(theta2),
        lambda_max=lambda_max,
        times=ts,
    )
    return DriverSpec(
        variant="perfect_market",
        fn=spec.fn,
        lipschitz=spec.lipschitz,
        linear=spec.linear,
        description="risk-neutralising linear driver",
    )


def large_investor_driver(
    r: CoefficientFn,
    theta1: CoefficientFn,
    theta2: CoefficientFn,
    sigma1: CoefficientFn,
    sigma2: CoefficientFn,
    impact: Callable[[float, np.ndarray, np.ndarray, np.ndarray], np.ndarray],
    *,
    lambda_max: float,
    impact_bound: float,
    times: np.ndarray | None = None,
) -> DriverSpec:
    """Perfect-market driver plus a trading-impact tilt of the jump term.

    The impact map receives (t, wealth, position in the risky asset, position
    in the defaultable asset) and must stay within the declared impact_bound
    in absolute value over the states it will see; it must also stay > -1 for
    the reweighted intensity to remain positive.  The admissibility constant
    folds impact_bound into the jump slope, which is valid exactly when the
    declaration is honest (verify_admissibility probes it).
    """
    ts = np.linspace(0.0, 1.0, 65) if times is None else np.asarray(times, dtype=float)
    if coefficient_bound(sigma1, ts) == 0 or any(
        coefficient_at(sigma1, float(t)) == 0 for t in ts
    ):
        raise ValidationError("sigma1 must be nonzero for the hedge map")
    if impact_bound < 0 or not math.isfinite(impact_bound):
        raise ValidationError("impact_bound must be finite and >= 0")
    c = max(
        coefficient_bound(r, ts),
        coefficient_bound(theta1, ts),
        (coefficient_bound(theta2, ts) + impact_bound) * math.sqrt(lambda_max),
    )

    def fn(t, y, z, k, lam):
        rv = coefficient_at(r, t)
        t1 = coefficient_at(theta1, t)
        t2 = coefficient_at(theta2, t)
        s1 = coefficient_at(sigma1, t)
        s2 = coefficient_at(sigma2, t)
        phi1 = (z + s2 * k) / s1
        phi2 = -k
        gamma = np.asarray(impact(t, y, phi1, phi2), dtype=float)
        if (gamma <= -1).any():
            raise ValidationError(f"impact map produced values <= -1 at t={t}")
        return -rv * y - t1 * z - t2 * lam * k + gamma * lam * k

    return DriverSpec(
        variant="large_investor",
        fn=fn,
        lipschitz=c,
        description="impact-adjusted pricing driver",
    )


def custom_driver(
    fn: Callable[..., np.ndarray], lipschitz: float, description: str = ""
) -> DriverSpec:
    return DriverSpec(variant="custom", fn=fn, lipschitz=lipschitz, description=description)


def expression_driver(source: str, lipschitz: float) -> DriverSpec:
    """Driver from an expression over (t, y, z, k, lambda)."""
    expr = compile_expression(source, ["t", "y", "z", "k", "lambda"])

    def fn(t, y, z, k, lam):
        return expr(t=t, y=y, z=z, k=k, **{"lambda": lam})

    return DriverSpec(
        variant="custom_expression", fn=fn, lipschitz=lipschitz, description=source
    )


def _negate(c: CoefficientFn) -> CoefficientFn:
    if callable(c):
        return lambda t: -float(c(t))
    return -float(c)


@dataclass(frozen=True)
class AdmissibilityReport:
    constant: float
    max_ratio: float
    violations: int
    samples: int
    worst: dict
    passed: bool


def verify_admissibility(
    driver: DriverSpec,
    *,
    lambda_max: float,
    t_range: tuple[float, float] = (0.0, 1.0),
    scale: float = 10.0,
    samples: int = 4000,
    seed: int = 0,
    tolerance: float = 1e-9,
) -> AdmissibilityReport:
    """Sample the Lipschitz ratio against the declared constant.

    Draws argument pairs uniformly in a box of the given scale and intensities
    in [0, lambda_max] (pinning some draws to exactly zero to exercise the
    post-default convention), and reports the largest observed ratio

        |g(.., x1) - g(.., x2)| / (|y1-y2| + |z1-z2| + sqrt(lam) |k1-k2|).
    """
    rng = np.random.default_rng(seed)
    t0, t1 = t_range
    ts = rng.uniform(t0, t1, samples)
    lam = rng.uniform(0.0, lambda_max, samples)
    lam[rng.random(samples) < 0.1] = 0.0
    a = rng.uniform(-scale, scale, (samples, 3))
    b = rng.uniform(-scale, scale, (samples, 3))

    max_ratio = 0.0
    worst: dict = {}
    violations = 0
    for i in range(samples):
        t = float(ts[i])
        la = float(lam[i])
        g1 = float(evaluate(driver, t, a[i, 0], a[i, 1], a[i, 2], la))
        g2 = float(evaluate(driver, t, b[i, 0], b[i, 1], b[i, 2], la))
        denom = (
            abs(a[i, 0] - b[i, 0])
            + abs(a[i, 1] - b[i, 1])
            + math.sqrt(la) * abs(a[i, 2] - b[i, 2])
        )
        if denom < 1e-14:
            continue
        ratio = abs(g1 - g2) / denom
        if ratio > driver.lipschitz + tolerance:
            violations += 1
        if ratio > max_ratio:
            max_ratio = ratio
            worst = {
                "t": t,
                "lambda": la,
                "args1": a[i].tolist(),
                "args2": b[i].tolist(),
                "ratio": ratio,
            }
    return AdmissibilityReport(
        constant=driver.lipschitz,
        max_ratio=max_ratio,
        violations=violations,
        samples=samples,
        worst=worst,
        passed=violations == 0,
    )
