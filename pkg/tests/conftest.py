"""Shared fixtures: small deterministic scenario objects reused across files."""

import numpy as np
import pytest

from bsde_engine import IntensityModel, build_grid, build_tree


@pytest.fixture
def grid8():
    return build_grid(1.0, 8)


@pytest.fixture
def half_intensity():
    return IntensityModel.constant(0.5)


@pytest.fixture
def tree8(grid8, half_intensity):
    return build_tree(grid8, half_intensity)


@pytest.fixture
def rng():
    return np.random.default_rng(20260822)
