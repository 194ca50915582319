"""Discrete measures on the real line, empirical aggregation and streaming moments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import EmptySample, InvalidDistribution, NonFiniteSample

# Rounding slack accepted by the constructor before it refuses to renormalize.
NORMALIZATION_SLACK = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False, init=False)
class DiscreteDistribution:
    """Finitely supported probability measure.

    ``support`` is strictly increasing; atoms given more than once are merged
    by summing their weights. Values are merged only when exactly equal.
    """

    support: np.ndarray
    weights: np.ndarray

    def __init__(self, support: Iterable[float], weights: Iterable[float]):
        x = np.asarray(support, dtype=float).ravel()
        w = np.asarray(weights, dtype=float).ravel()
        if x.size == 0:
            raise InvalidDistribution("distribution needs at least one atom")
        if x.shape != w.shape:
            raise InvalidDistribution(
                f"support has {x.size} points but {w.size} weights were given"
            )
        if not np.all(np.isfinite(x)):
            raise NonFiniteSample("support points must be finite")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise InvalidDistribution("weights must be finite and nonnegative")
        total = float(np.sum(w))
        if total <= 0:
            raise InvalidDistribution("at least one weight must be positive")
        if abs(total - 1.0) > NORMALIZATION_SLACK:
            raise InvalidDistribution(f"weights sum to {total!r}, not 1")
        if x.size > 1 and not np.all(np.diff(x) > 0):
            x, inverse = np.unique(x, return_inverse=True)
            w = np.bincount(inverse.ravel(), weights=w, minlength=x.size)
        # normalize after merging so a lone atom gets weight exactly 1
        w = w / float(np.sum(w))
        object.__setattr__(self, "support", _readonly(x))
        object.__setattr__(self, "weights", _readonly(w))

    @classmethod
    def from_counts(cls, values, counts) -> "DiscreteDistribution":
        counts = np.asarray(counts, dtype=float)
        return cls(values, counts / counts.sum())

    @classmethod
    def point_mass(cls, x: float) -> "DiscreteDistribution":
        return cls([x], [1.0])

    def __len__(self) -> int:
        return int(self.support.size)

    def __repr__(self) -> str:
        if len(self) <= 6:
            atoms = ", ".join(f"{x:g}: {w:g}" for x, w in zip(self.support, self.weights))
            return f"DiscreteDistribution({{{atoms}}})"
        return f"DiscreteDistribution(<{len(self)} atoms on [{self.support[0]:g}, {self.support[-1]:g}]>)"

    @property
    def mean(self) -> float:
        # a weighted average cannot leave [min, max]; rounding can
        return min(max(float(np.dot(self.weights, self.support)), float(self.support[0])), float(self.support[-1]))

    @property
    def variance(self) -> float:
        d = self.support - self.mean
        return float(np.dot(self.weights, d * d))

    @property
    def lower(self) -> float:
        return float(self.support[0])

    @property
    def upper(self) -> float:
        return float(self.support[-1])

    def atom_weight(self, x: float) -> float:
        i = int(np.searchsorted(self.support, x))
        if i < self.support.size and self.support[i] == x:
            return float(self.weights[i])
        return 0.0

    def same_as(self, other: "DiscreteDistribution", atol: float = 1e-12) -> bool:
        """Equality of the charged atoms (zero-weight atoms are ignored)."""
        a, b = self.support[self.weights > 0], other.support[other.weights > 0]
        if a.shape != b.shape or not np.array_equal(a, b):
            return False
        return bool(np.allclose(self.weights[self.weights > 0], other.weights[other.weights > 0], rtol=0, atol=atol))


@dataclass(frozen=True)
class SupportInterval:
    lower: float
    upper: float

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise InvalidDistribution("interval endpoints must be finite")
        if not self.lower < self.upper:
            raise InvalidDistribution(f"empty interval [{self.lower}, {self.upper}]")

    @classmethod
    def symmetric(cls, half_width: float) -> "SupportInterval":
        return cls(-half_width, half_width)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, dist: DiscreteDistribution) -> bool:
        return dist.lower >= self.lower and dist.upper <= self.upper


def empirical_from_samples(samples) -> DiscreteDistribution:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise EmptySample("cannot build an empirical measure from no samples")
    if not np.all(np.isfinite(x)):
        raise NonFiniteSample("samples must be finite")
    values, counts = np.unique(x, return_counts=True)
    return DiscreteDistribution.from_counts(values, counts)


def kl_divergence(nu: DiscreteDistribution, q: DiscreteDistribution) -> float:
    """KL(nu || q); ``math.inf`` when nu is not absolutely continuous w.r.t. q."""
    charged = nu.weights > 0
    x, w = nu.support[charged], nu.weights[charged]
    idx = np.searchsorted(q.support, x)
    found = idx < q.support.size
    found[found] &= q.support[idx[found]] == x[found]
    if not np.all(found):
        return math.inf
    qw = q.weights[idx]
    if np.any(qw <= 0):
        return math.inf
    terms = w * (np.log(w) - np.log(qw))
    return max(float(np.sum(terms)), 0.0)


@dataclass
class RunningMoments:
    """Streaming count, mean, centred sum of squares and running max of |x|.

    The variance uses divisor ``count``. Updates use Welford's recurrence and
    Chan's pairwise merge for batches.
    """

    count: int = 0
    mean: float = 0.0
    sum_sq_dev: float = 0.0
    max_abs: float = 0.0

    @property
    def variance(self) -> float:
        return self.sum_sq_dev / self.count if self.count else 0.0

    def deficit(self, m: float) -> float:
        """(m - mean)_+, the shortfall of the running mean below ``m``."""
        return max(m - self.mean, 0.0)

    def push(self, x: float) -> "RunningMoments":
        x = float(x)
        if not math.isfinite(x):
            raise NonFiniteSample(f"non-finite sample {x!r}")
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.sum_sq_dev += delta * (x - self.mean)
        self.max_abs = max(self.max_abs, abs(x))
        return self

    def extend(self, xs) -> "RunningMoments":
        xs = np.asarray(xs, dtype=float).ravel()
        if xs.size == 0:
            return self
        if not np.all(np.isfinite(xs)):
            raise NonFiniteSample("batch contains non-finite samples")
        nb = xs.size
        mb = float(np.mean(xs))
        m2b = float(np.sum((xs - mb) ** 2))
        na = self.count
        n = na + nb
        delta = mb - self.mean
        self.mean += delta * nb / n
        self.sum_sq_dev += m2b + delta * delta * na * nb / n
        self.count = n
        self.max_abs = max(self.max_abs, float(np.max(np.abs(xs))))
        return self

    def copy(self) -> "RunningMoments":
        return RunningMoments(self.count, self.mean, self.sum_sq_dev, self.max_abs)


def update_moments(state: RunningMoments, x: float) -> RunningMoments:
    """Return a new state with ``x`` folded in; ``state`` is left untouched."""
    return state.copy().push(x)


@dataclass
class EmpiricalAccumulator:
    """Grows an empirical measure chunk by chunk.

    The merged (values, counts) pair is canonical: it depends only on the
    multiset of samples seen, never on how they were chunked.
    """

    values: np.ndarray = field(default_factory=lambda: np.empty(0))
    counts: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def add(self, chunk) -> None:
        chunk = np.asarray(chunk, dtype=float).ravel()
        if chunk.size == 0:
            return
        if not np.all(np.isfinite(chunk)):
            raise NonFiniteSample("chunk contains non-finite samples")
        u, c = np.unique(chunk, return_counts=True)
        if self.values.size == 0:
            self.values, self.counts = u, c.astype(np.int64)
            return
        merged, inverse = np.unique(np.concatenate([self.values, u]), return_inverse=True)
        counts = np.bincount(inverse.ravel(), weights=np.concatenate([self.counts, c]), minlength=merged.size)
        self.values, self.counts = merged, counts.astype(np.int64)

    def measure(self) -> DiscreteDistribution:
        if self.values.size == 0:
            raise EmptySample("no samples accumulated")
        return DiscreteDistribution.from_counts(self.values, self.counts)
