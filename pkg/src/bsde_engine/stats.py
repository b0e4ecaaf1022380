"""Streaming first/second moments for batched Monte Carlo runs."""

from __future__ import annotations

import math

import numpy as np

from .exceptions import ValidationError

__all__ = ["RunningMoments"]


class RunningMoments:
    """Welford accumulator; add() merges one batch of sample values.

    Exact up to floating point: feeding batches in any split yields the same
    mean/variance as one concatenated array, which keeps streamed estimates
    consistent with in-memory ones.
    """

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self._m2 = 0.0

    def add(self, values: np.ndarray) -> None:
        vals = np.asarray(values, dtype=float).ravel()
        if vals.size == 0:
            return
        b_count = vals.size
        b_mean = float(vals.mean())
        b_m2 = float(((vals - b_mean) ** 2).sum())
        delta = b_mean - self.mean
        total = self.count + b_count
        self._m2 += b_m2 + delta * delta * self.count * b_count / total
        self.mean += delta * b_count / total
        self.count = total

    @property
    def variance(self) -> float:
        if self.count < 2:
            raise ValidationError("variance needs at least two samples")
        return self._m2 / (self.count - 1)

    @property
    def se(self) -> float:
        return math.sqrt(self.variance / self.count)
