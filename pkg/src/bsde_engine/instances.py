"""Seeded random instance generators for the property suites.

Everything here is deterministic in the seed parts fed to make_rng, so suite
runs are reproducible and failures can be replayed by seed.  Comparison and
estimate pairs are built by construction to satisfy their hypotheses; the
comparison generator additionally verifies that the discrete one-step weights
of the dominating driver stay positive (the discrete analogue of the slope
condition) and resamples when they do not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .contracts import (
    ClaimSpec,
    DividendProcess,
    add_dividends,
    combine_claims,
    constant_claim,
    expression_claim,
    no_dividends,
)
from .drivers import DriverSpec, coefficient_at, lambda_linear
from .market import MarketModel
from .scenarios import IntensityModel, TimeGrid, build_grid

__all__ = [
    "make_rng",
    "random_grid",
    "random_intensity",
    "random_linear_driver",
    "random_claim",
    "nonneg_claim",
    "random_dividends",
    "ComparisonInstance",
    "comparison_pair",
    "AprioriInstance",
    "apriori_pair",
    "market_instance",
    "PicardInstance",
    "picard_instance",
]


def make_rng(*seed_parts: int) -> np.random.Generator:
    return np.random.default_rng(list(seed_parts))


def random_grid(
    rng: np.random.Generator, *, n_steps: int = 8, horizon_range=(0.5, 1.0)
) -> TimeGrid:
    return build_grid(float(rng.uniform(*horizon_range)), n_steps)


def random_intensity(
    rng: np.random.Generator,
    *,
    lam_range=(0.2, 1.0),
    allow_time_dependent: bool = True,
) -> IntensityModel:
    base = float(rng.uniform(*lam_range))
    if allow_time_dependent and rng.random() < 0.3:
        slope = float(rng.uniform(-0.3, 0.3)) * base
        lo = min(base, base + slope)
        if lo < 0.05:
            slope = 0.0
        return IntensityModel.deterministic(
            lambda t, b=base, s=slope: b + s * t, lambda_max=max(base, base + slope)
        )
    return IntensityModel.constant(base)


def _coefficient(rng: np.random.Generator, lo: float, hi: float, time_dep: bool):
    a = float(rng.uniform(lo, hi))
    if time_dep and rng.random() < 0.35:
        # keep a + b t inside [lo, hi] for t in [0, 1]
        b = float(rng.uniform(lo - a, hi - a))
        return lambda t, a=a, b=b: a + b * t
    return a


def random_linear_driver(
    rng: np.random.Generator,
    lambda_max: float,
    *,
    times: np.ndarray | None = None,
    comparison_safe: bool = False,
    allow_time_dependent: bool = True,
    allow_regime_split: bool = True,
) -> DriverSpec:
    """Affine driver with coefficients drawn inside admissible boxes.

    comparison_safe shrinks the boxes so one-step branch weights stay
    positive on unit-scale grids (verified separately where the grid is
    known).
    """
    if comparison_safe:
        phi = _coefficient(rng, -1.0, 1.0, allow_time_dependent)
        delta = _coefficient(rng, -1.0, 1.0, allow_time_dependent)
        beta = _coefficient(rng, -0.8, 0.8, allow_time_dependent)
        gamma = _coefficient(rng, -0.6, 1.2, allow_time_dependent)
    else:
        phi = _coefficient(rng, -1.5, 1.5, allow_time_dependent)
        delta = _coefficient(rng, -1.2, 1.2, allow_time_dependent)
        beta = _coefficient(rng, -1.0, 1.0, allow_time_dependent)
        gamma = _coefficient(rng, -0.9, 1.5, allow_time_dependent)
    phi_post = None
    if allow_regime_split and rng.random() < 0.3:
        phi_post = _coefficient(rng, -1.0, 1.0, allow_time_dependent)
    return lambda_linear(
        phi, delta, beta, gamma, lambda_max=lambda_max, times=times, phi_post=phi_post
    )


_CLAIM_BUILDERS = (
    lambda rng: constant_claim(float(rng.uniform(-1.0, 2.0))),
    lambda rng: expression_claim(
        f"{rng.uniform(-0.5, 0.5):.6g} + {rng.uniform(0.2, 1.0):.6g}"
        "*min(max(w, -1.5), 1.5)"
    ),
    lambda rng: expression_claim(
        f"{rng.uniform(0.2, 1.0):.6g}*ind(w - {rng.uniform(-0.5, 0.5):.6g})"
    ),
    lambda rng: expression_claim(f"{rng.uniform(0.2, 1.5):.6g}*n"),
    lambda rng: expression_claim(
        f"{rng.uniform(0.2, 0.8):.6g}*n + {rng.uniform(0.2, 0.8):.6g}"
        f"*ind(w - {rng.uniform(-0.3, 0.3):.6g}) + {rng.uniform(-0.3, 0.3):.6g}"
    ),
)

_PRODUCT_CLAIM = (
    lambda rng: expression_claim(
        f"(1 - n)*min(max({rng.uniform(0.3, 1.0):.6g}*w, -1), 1)"
    ),
)


def random_claim(
    rng: np.random.Generator, *, separable: bool = True
) -> ClaimSpec:
    """Bounded terminal payout in (w, n); separable excludes w-by-default
    product terms (the class where discrete replication is exact)."""
    pool = _CLAIM_BUILDERS if separable else _CLAIM_BUILDERS + _PRODUCT_CLAIM
    return pool[int(rng.integers(len(pool)))](rng)


def nonneg_claim(rng: np.random.Generator) -> ClaimSpec:
    choice = int(rng.integers(3))
    if choice == 0:
        return constant_claim(float(rng.uniform(0.0, 1.0)))
    if choice == 1:
        return expression_claim(
            f"{rng.uniform(0.1, 0.8):.6g}*ind(w - {rng.uniform(-0.3, 0.3):.6g})"
        )
    return expression_claim(
        f"{rng.uniform(0.1, 0.6):.6g}*n + {rng.uniform(0.0, 0.3):.6g}"
    )


def random_dividends(
    rng: np.random.Generator,
    horizon: float,
    *,
    non_decreasing: bool = True,
    allow_jumps: bool = True,
) -> DividendProcess:
    rate = 0.0 if rng.random() < 0.5 else float(rng.uniform(0.0, 0.4))
    if not non_decreasing and rng.random() < 0.5:
        rate = -rate
    jumps = []
    if allow_jumps:
        for _ in range(int(rng.integers(0, 3))):
            t = float(rng.uniform(0.05, horizon))
            a = float(rng.uniform(0.0, 0.4))
            if not non_decreasing and rng.random() < 0.5:
                a = -a
            jumps.append((t, a))
    return DividendProcess(
        rate=rate, jumps=tuple(jumps), non_decreasing=non_decreasing
    )


def branch_margin(
    driver: DriverSpec, grid: TimeGrid, intensity: IntensityModel
) -> float:
    """Worst discrete one-step weight of the driver's affine recursion.

    Positive margins make the backward step a monotone average, which is
    what the discrete order-preservation argument needs.
    """
    if driver.linear is None:
        raise ValueError("branch margins are defined for affine drivers")
    worst = math.inf
    for i in range(grid.n_steps):
        t = float(grid.nodes[i])
        dt = float(grid.dt[i])
        lam = intensity.at_time(t)
        q = lam * dt
        _, delta, beta, gamma = driver.linear.at(t)
        sq = math.sqrt(dt)
        denom = 1.0 - delta * dt
        if denom <= 0:
            return -math.inf
        for dw in (sq, -sq):
            worst = min(worst, 1.0 + beta * dw - gamma * q)
            if q > 0:
                worst = min(worst, 1.0 + beta * dw + gamma * (1.0 - q))
    return worst


@dataclass(frozen=True)
class ComparisonInstance:
    grid: TimeGrid
    intensity: IntensityModel
    driver1: DriverSpec
    driver2: DriverSpec
    claim1: ClaimSpec
    claim2: ClaimSpec
    div1: DividendProcess
    div2: DividendProcess


def comparison_pair(
    rng: np.random.Generator, *, n_steps: int = 8, max_attempts: int = 25
) -> ComparisonInstance:
    """Ordered pair built by construction: driver1 = driver2 + positive
    shift, claim1 = claim2 + nonnegative extra, div1 = div2 + extra income."""
    grid = random_grid(rng, n_steps=n_steps)
    intensity = random_intensity(rng)
    for _ in range(max_attempts):
        base = random_linear_driver(
            rng, intensity.lambda_max, times=grid.nodes, comparison_safe=True
        )
        if branch_margin(base, grid, intensity) >= 0.05:
            break
    else:
        base = lambda_linear(
            0.2, 0.3, 0.2, 0.0, lambda_max=intensity.lambda_max, times=grid.nodes
        )
    lc = base.linear
    shift = float(rng.uniform(0.05, 0.5))
    phi1 = (
        (lambda t, f=lc.phi, s=shift: f(t) + s) if callable(lc.phi) else float(lc.phi) + shift
    )
    driver1 = lambda_linear(
        phi1,
        lc.delta,
        lc.beta,
        lc.gamma,
        lambda_max=intensity.lambda_max,
        times=grid.nodes,
        phi_post=None if lc.phi_post is None else (
            (lambda t, f=lc.phi_post, s=shift: coefficient_at(f, t) + s)
        ),
    )
    claim2 = random_claim(rng)
    claim1 = combine_claims(claim2, nonneg_claim(rng))
    div2 = random_dividends(rng, grid.horizon)
    extra = random_dividends(rng, grid.horizon)
    div1 = add_dividends(div2, extra)
    return ComparisonInstance(
        grid=grid,
        intensity=intensity,
        driver1=driver1,
        driver2=base,
        claim1=claim1,
        claim2=claim2,
        div1=div1,
        div2=div2,
    )


@dataclass(frozen=True)
class AprioriInstance:
    grid: TimeGrid
    intensity: IntensityModel
    driver1: DriverSpec
    driver2: DriverSpec
    claim1: ClaimSpec
    claim2: ClaimSpec
    dividends: DividendProcess
    eta: float
    beta: float


def apriori_pair(rng: np.random.Generator, *, n_steps: int = 8) -> AprioriInstance:
    """Two independent affine instances plus admissible (eta, beta) weights.

    The pair shares one dividend stream so the discrete estimate sees only
    terminal and driver differences.
    """
    grid = random_grid(rng, n_steps=n_steps)
    intensity = random_intensity(rng)

    def bounded_driver():
        phi = _coefficient(rng, -1.0, 1.0, True)
        delta = _coefficient(rng, -0.8, 0.8, True)
        beta = _coefficient(rng, -0.8, 0.8, True)
        g_cap = 0.8 / math.sqrt(max(intensity.lambda_max, 1e-12))
        gamma = _coefficient(rng, -min(g_cap, 1.2), min(g_cap, 1.2), True)
        return lambda_linear(
            phi, delta, beta, gamma, lambda_max=intensity.lambda_max, times=grid.nodes
        )

    d1 = bounded_driver()
    d2 = bounded_driver()
    c = max(d1.lipschitz, d2.lipschitz)
    u = float(rng.uniform(0.3, 0.9))
    eta = u / (c * c) if c > 0 else 0.5
    beta = 3.0 / eta + 2.0 * c + float(rng.uniform(0.0, 0.5))
    return AprioriInstance(
        grid=grid,
        intensity=intensity,
        driver1=d1,
        driver2=d2,
        claim1=random_claim(rng),
        claim2=random_claim(rng),
        dividends=random_dividends(rng, grid.horizon),
        eta=eta,
        beta=beta,
    )


def market_instance(
    rng: np.random.Generator,
    *,
    theta2_range=(-0.5, 0.95),
    force_above_one: bool = False,
) -> MarketModel:
    """Market drawn inside the target jump-premium regime.

    mu2 is backed out from the chosen theta2, so the instance sits exactly
    where the regime flag says it does.
    """
    r = float(rng.uniform(0.0, 0.05))
    sigma1 = float(rng.uniform(0.15, 0.35))
    theta1 = float(rng.uniform(-0.3, 0.4))
    mu1 = r + theta1 * sigma1
    sigma2 = float(rng.uniform(0.1, 0.3))
    lam = float(rng.uniform(0.2, 0.8))
    theta2 = float(
        rng.uniform(1.1, 1.6) if force_above_one else rng.uniform(*theta2_range)
    )
    mu2 = sigma2 * theta1 + r - theta2 * lam
    return MarketModel(
        r=r,
        mu1=mu1,
        sigma1=sigma1,
        mu2=mu2,
        sigma2=sigma2,
        intensity=IntensityModel.constant(lam),
    )


@dataclass(frozen=True)
class PicardInstance:
    grid: TimeGrid
    intensity: IntensityModel
    driver: DriverSpec
    claim: ClaimSpec
    dividends: DividendProcess


def picard_instance(rng: np.random.Generator, *, n_steps: int = 8) -> PicardInstance:
    """Instance with a unit-bounded driver constant, so that the weighted
    norm's rate parameter stays moderate."""
    grid = random_grid(rng, n_steps=n_steps)
    intensity = random_intensity(rng)
    phi = _coefficient(rng, -1.0, 1.0, True)
    delta = _coefficient(rng, -0.7, 0.7, True)
    beta = _coefficient(rng, -0.7, 0.7, True)
    g_cap = 0.7 / math.sqrt(max(intensity.lambda_max, 1e-12))
    gamma = _coefficient(rng, -g_cap, g_cap, True)
    driver = lambda_linear(
        phi, delta, beta, gamma, lambda_max=intensity.lambda_max, times=grid.nodes
    )
    return PicardInstance(
        grid=grid,
        intensity=intensity,
        driver=driver,
        claim=random_claim(rng),
        dividends=random_dividends(rng, grid.horizon),
    )
