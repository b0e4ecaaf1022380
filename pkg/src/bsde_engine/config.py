"""Config file loading and validation for the command-line harness.

The config is one JSON object with one sub-object per block.  Every
validation error names the dotted path of the offending field, so a bad
file can be fixed without reading source code.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any

from .contracts import (
    ClaimSpec,
    DividendProcess,
    call_claim,
    constant_claim,
    default_digital_claim,
    expression_claim,
    no_dividends,
    put_claim,
)
from .drivers import DriverSpec, expression_driver, lambda_linear
from .exceptions import ConfigurationError
from .market import MarketModel, pricing_driver
from .properties import AXIOMS
from .scenarios import IntensityModel, TimeGrid, build_grid

__all__ = ["RunConfig", "load_config", "parse_config", "METHODS"]

METHODS = ("tree", "lsmc", "representation")

_MISSING = object()


def _fail(path: str, message: str) -> None:
    raise ConfigurationError(f"{path}: {message}")


def _get(obj: dict, key: str, path: str, default=_MISSING):
    if key in obj:
        return obj[key]
    if default is _MISSING:
        _fail(f"{path}.{key}", "required field is missing")
    return default


def _number(obj: dict, key: str, path: str, default=_MISSING) -> float:
    value = _get(obj, key, path, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(f"{path}.{key}", f"must be a number, got {value!r}")
    if not math.isfinite(value):
        _fail(f"{path}.{key}", "must be finite")
    return float(value)


def _integer(obj: dict, key: str, path: str, default=_MISSING) -> int:
    value = _get(obj, key, path, default)
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(f"{path}.{key}", f"must be an integer, got {value!r}")
    return int(value)


def _string(obj: dict, key: str, path: str, default=_MISSING) -> str:
    value = _get(obj, key, path, default)
    if not isinstance(value, str):
        _fail(f"{path}.{key}", f"must be a string, got {value!r}")
    return value


def _block(obj: dict, key: str, path: str = "", required: bool = True) -> dict | None:
    here = f"{path}.{key}" if path else key
    if key not in obj:
        if required:
            _fail(here, "required block is missing")
        return None
    value = obj[key]
    if not isinstance(value, dict):
        _fail(here, "must be an object")
    return value


def _reject_unknown(obj: dict, known: set[str], path: str) -> None:
    extra = sorted(set(obj) - known)
    if extra:
        _fail(f"{path}.{extra[0]}", "unknown field")


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration with engine objects already built."""

    grid: TimeGrid
    intensity: IntensityModel
    driver: DriverSpec | None
    claim: ClaimSpec | None
    dividends: DividendProcess
    market: MarketModel | None
    method: str
    paths: int | None
    seed: int | None
    out_dir: str
    threads: int
    suite_axioms: tuple[str, ...]
    suite_instances: int
    suite_steps: int
    sha256: str
    raw: dict = field(repr=False)

    def require(self, name: str, subcommand: str):
        value = getattr(self, name)
        if value is None:
            block = {"paths": "paths", "seed": "seed"}.get(name, name)
            _fail(block, f"required by subcommand {subcommand!r}")
        return value


def _parse_grid(data: dict) -> TimeGrid:
    block = _block(data, "grid")
    _reject_unknown(block, {"horizon", "steps"}, "grid")
    horizon = _number(block, "horizon", "grid")
    steps = _integer(block, "steps", "grid")
    if horizon <= 0:
        _fail("grid.horizon", "must be positive")
    if steps < 1:
        _fail("grid.steps", "must be at least 1")
    return build_grid(horizon, steps)


def _parse_intensity(data: dict, grid: TimeGrid) -> IntensityModel:
    block = _block(data, "intensity")
    _reject_unknown(block, {"model", "value", "base", "slope"}, "intensity")
    model = _string(block, "model", "intensity", "constant")
    if model == "constant":
        value = _number(block, "value", "intensity")
        if value < 0:
            _fail("intensity.value", "must be nonnegative")
        return IntensityModel.constant(value)
    if model == "affine":
        base = _number(block, "base", "intensity")
        slope = _number(block, "slope", "intensity", 0.0)
        lo = min(base, base + slope * grid.horizon)
        if lo < 0:
            _fail("intensity.base", "rate goes negative on the grid horizon")
        hi = max(base, base + slope * grid.horizon)
        return IntensityModel.deterministic(
            lambda t, b=base, s=slope: b + s * t, lambda_max=hi
        )
    _fail("intensity.model", f"must be 'constant' or 'affine', got {model!r}")


def _coefficient_field(block: dict, key: str, path: str, default=_MISSING):
    if key in block and block[key] is None:
        return None
    if default is None and key not in block:
        return None
    return _number(block, key, path, default)


def _parse_driver(
    data: dict,
    grid: TimeGrid,
    intensity: IntensityModel,
    market: MarketModel | None,
) -> DriverSpec | None:
    block = _block(data, "driver", required=False)
    if block is None:
        return None
    kind = _string(block, "type", "driver")
    if kind == "linear":
        _reject_unknown(
            block,
            {"type", "phi", "delta", "beta", "gamma", "phi_post", "delta_post", "beta_post"},
            "driver",
        )
        return lambda_linear(
            _number(block, "phi", "driver", 0.0),
            _number(block, "delta", "driver", 0.0),
            _number(block, "beta", "driver", 0.0),
            _number(block, "gamma", "driver", 0.0),
            lambda_max=intensity.lambda_max,
            times=grid.nodes,
            phi_post=_coefficient_field(block, "phi_post", "driver", None),
            delta_post=_coefficient_field(block, "delta_post", "driver", None),
            beta_post=_coefficient_field(block, "beta_post", "driver", None),
        )
    if kind == "market":
        _reject_unknown(block, {"type"}, "driver")
        if market is None:
            _fail("driver.type", "'market' needs a market block")
        return pricing_driver(market, grid)
    if kind == "expression":
        _reject_unknown(block, {"type", "source", "lipschitz"}, "driver")
        source = _string(block, "source", "driver")
        lipschitz = _number(block, "lipschitz", "driver")
        if lipschitz < 0:
            _fail("driver.lipschitz", "must be nonnegative")
        try:
            return expression_driver(source, lipschitz)
        except Exception as exc:
            _fail("driver.source", str(exc))
    _fail("driver.type", f"must be 'linear', 'market' or 'expression', got {kind!r}")


def _parse_claim(data: dict, market: MarketModel | None) -> ClaimSpec | None:
    block = _block(data, "claim", required=False)
    if block is None:
        return None
    kind = _string(block, "type", "claim")
    if kind == "constant":
        _reject_unknown(block, {"type", "value"}, "claim")
        claim = constant_claim(_number(block, "value", "claim"))
    elif kind == "call":
        _reject_unknown(block, {"type", "strike"}, "claim")
        claim = call_claim(_number(block, "strike", "claim"))
    elif kind == "put":
        _reject_unknown(block, {"type", "strike"}, "claim")
        claim = put_claim(_number(block, "strike", "claim"))
    elif kind == "default_digital":
        _reject_unknown(block, {"type"}, "claim")
        claim = default_digital_claim()
    elif kind == "expression":
        _reject_unknown(block, {"type", "source"}, "claim")
        try:
            claim = expression_claim(_string(block, "source", "claim"))
        except Exception as exc:
            _fail("claim.source", str(exc))
    else:
        _fail(
            "claim.type",
            f"must be 'constant', 'call', 'put', 'default_digital' or 'expression', got {kind!r}",
        )
    if claim.uses_assets and market is None:
        _fail("claim.type", "claim references asset prices but there is no market block")
    return claim


def _parse_dividends(data: dict, grid: TimeGrid) -> DividendProcess:
    block = _block(data, "dividend", required=False)
    if block is None:
        return no_dividends()
    _reject_unknown(block, {"rate", "jumps", "non_decreasing"}, "dividend")
    rate = _number(block, "rate", "dividend", 0.0)
    jumps_raw = _get(block, "jumps", "dividend", [])
    if not isinstance(jumps_raw, list):
        _fail("dividend.jumps", "must be a list of [time, amount] pairs")
    jumps = []
    for idx, item in enumerate(jumps_raw):
        if not isinstance(item, list) or len(item) != 2:
            _fail(f"dividend.jumps[{idx}]", "must be a [time, amount] pair")
        t, a = item
        for name, v in (("time", t), ("amount", a)):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                _fail(f"dividend.jumps[{idx}]", f"{name} must be a finite number")
        if not 0.0 < t <= grid.horizon:
            _fail(f"dividend.jumps[{idx}]", "time must lie in (0, horizon]")
        jumps.append((float(t), float(a)))
    default_nd = rate >= 0 and all(a >= 0 for _, a in jumps)
    non_decreasing = _get(block, "non_decreasing", "dividend", default_nd)
    if not isinstance(non_decreasing, bool):
        _fail("dividend.non_decreasing", "must be a boolean")
    try:
        return DividendProcess(
            rate=rate, jumps=tuple(jumps), non_decreasing=non_decreasing
        )
    except Exception as exc:
        _fail("dividend", str(exc))


def _parse_market(data: dict, intensity: IntensityModel) -> MarketModel | None:
    block = _block(data, "market", required=False)
    if block is None:
        return None
    known = {"rate", "drift1", "vol1", "drift2", "vol2", "s1_0", "s2_0", "theta2_override"}
    _reject_unknown(block, known, "market")
    vol1 = _number(block, "vol1", "market")
    vol2 = _number(block, "vol2", "market")
    if vol1 <= 0:
        _fail("market.vol1", "must be positive")
    if vol2 <= 0:
        _fail("market.vol2", "must be positive")
    override = None
    if "theta2_override" in block:
        override = _number(block, "theta2_override", "market")
    try:
        return MarketModel(
            r=_number(block, "rate", "market"),
            mu1=_number(block, "drift1", "market"),
            sigma1=vol1,
            mu2=_number(block, "drift2", "market"),
            sigma2=vol2,
            intensity=intensity,
            s1_0=_number(block, "s1_0", "market", 1.0),
            s2_0=_number(block, "s2_0", "market", 1.0),
            theta2_override=override,
        )
    except Exception as exc:
        _fail("market", str(exc))


def _parse_suite(data: dict) -> tuple[tuple[str, ...], int, int]:
    block = _block(data, "suite", required=False)
    if block is None:
        return AXIOMS, 100, 6
    _reject_unknown(block, {"axioms", "instances", "steps"}, "suite")
    names_raw = _get(block, "axioms", "suite", list(AXIOMS))
    if not isinstance(names_raw, list) or not names_raw:
        _fail("suite.axioms", "must be a non-empty list of axiom names")
    for idx, name in enumerate(names_raw):
        if name not in AXIOMS:
            _fail(f"suite.axioms[{idx}]", f"unknown axiom {name!r}; choose from {list(AXIOMS)}")
    instances = _integer(block, "instances", "suite", 100)
    if instances < 1:
        _fail("suite.instances", "must be at least 1")
    steps = _integer(block, "steps", "suite", 6)
    if not 1 <= steps <= 10:
        _fail("suite.steps", "must be between 1 and 10")
    return tuple(names_raw), instances, steps


_TOP_LEVEL = {
    "grid",
    "intensity",
    "driver",
    "claim",
    "dividend",
    "market",
    "method",
    "paths",
    "seed",
    "out",
    "threads",
    "suite",
}


def parse_config(data: Any, sha256: str = "") -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("top level: must be a JSON object")
    _reject_unknown(data, _TOP_LEVEL, "config")

    grid = _parse_grid(data)
    intensity = _parse_intensity(data, grid)
    market = _parse_market(data, intensity)
    driver = _parse_driver(data, grid, intensity, market)
    claim = _parse_claim(data, market)
    dividends = _parse_dividends(data, grid)

    method = _string(data, "method", "config", "tree")
    if method not in METHODS:
        raise ConfigurationError(f"method: must be one of {list(METHODS)}, got {method!r}")

    paths = None
    if "paths" in data:
        paths = _integer(data, "paths", "config")
        if paths < 1:
            raise ConfigurationError("paths: must be at least 1")

    seed = None
    if "seed" in data:
        seed = _integer(data, "seed", "config")
        if seed < 0:
            raise ConfigurationError("seed: must be nonnegative")

    threads = _integer(data, "threads", "config", 1)
    if threads < 1:
        raise ConfigurationError("threads: must be at least 1")

    suite_axioms, suite_instances, suite_steps = _parse_suite(data)

    return RunConfig(
        grid=grid,
        intensity=intensity,
        driver=driver,
        claim=claim,
        dividends=dividends,
        market=market,
        method=method,
        paths=paths,
        seed=seed,
        out_dir=_string(data, "out", "config", "."),
        threads=threads,
        suite_axioms=suite_axioms,
        suite_instances=suite_instances,
        suite_steps=suite_steps,
        sha256=sha256,
        raw=data,
    )


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"config file: {exc}") from exc
    try:
        data = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"config file: not valid JSON ({exc})") from exc
    return parse_config(data, hashlib.sha256(blob).hexdigest())
