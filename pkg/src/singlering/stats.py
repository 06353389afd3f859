"""Streaming mean/variance accumulators and Monte Carlo estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np


@dataclass(frozen=True)
class RunningStats:
    """count / mean / M2 accumulator (Welford), mergeable with Chan's formula."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, values) -> "RunningStats":
        x = np.asarray(values, dtype=float).ravel()
        if x.size == 0:
            return cls()
        mu = float(x.mean())
        return cls(int(x.size), mu, float(np.sum((x - mu) ** 2)))

    def push(self, value: float) -> "RunningStats":
        n = self.count + 1
        delta = value - self.mean
        mean = self.mean + delta / n
        return RunningStats(n, mean, self.m2 + delta * (value - mean))

    def merge(self, other: "RunningStats") -> "RunningStats":
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / n
        return RunningStats(n, mean, m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    def estimate(self) -> "MCEstimate":
        return MCEstimate(self.mean, self.count, max(self.variance, 0.0))


def merge_all(parts) -> RunningStats:
    """Merge accumulators in a canonical order so completion order is irrelevant.

    ``parts`` is an iterable of ``(order_key, RunningStats)`` pairs.
    """
    ordered = sorted(parts, key=lambda kv: kv[0])
    return reduce(lambda acc, kv: acc.merge(kv[1]), ordered, RunningStats())


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    n: int
    variance: float

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("an MC estimate needs n >= 2 samples")
        if self.variance < 0:
            raise ValueError("variance must be nonnegative")

    @property
    def std_error(self) -> float:
        return math.sqrt(self.variance / self.n)

    se = std_error

    @classmethod
    def of(cls, values) -> "MCEstimate":
        return RunningStats.of(values).estimate()

    def as_dict(self) -> dict:
        return {"mean": self.mean, "n": self.n, "variance": self.variance, "std_error": self.std_error}
