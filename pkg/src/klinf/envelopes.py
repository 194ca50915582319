"""Deterministic truncation envelopes B_t for unbounded data.

Each family maps a time index t to a half-width B_t so that the time-t model
class is P([-B_t, B_t]). ``lil_scale`` is the reference scale sqrt(t/loglog t)
that separates quadratic behaviour from boundary-sprinkling collapse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional

import numpy as np

from .errors import DomainError

LIL_MIN_T = 16


class Regime(str, Enum):
    SUB_GAUSSIAN = "SubGaussian"
    SUB_EXPONENTIAL = "SubExponential"
    PTH_MOMENT = "PthMoment"
    SECOND_MOMENT = "SecondMoment"
    LIL_SCALE = "LILScale"
    CONSTANT = "Constant"

    @classmethod
    def parse(cls, name: str) -> "Regime":
        key = name.replace("_", "").replace("-", "").lower()
        for r in cls:
            if r.value.lower() == key:
                return r
        raise DomainError(f"unknown envelope regime {name!r}")


# required and optional parameters (with defaults) per regime
_PARAMS = {
    Regime.SUB_GAUSSIAN: (("v", "eps"), {"mu_abs": 0.0}),
    Regime.SUB_EXPONENTIAL: (("c", "eps"), {"mu_abs": 0.0}),
    Regime.PTH_MOMENT: (("p", "gamma"), {}),
    Regime.SECOND_MOMENT: (("gamma",), {}),
    Regime.LIL_SCALE: ((), {}),
    Regime.CONSTANT: (("B",), {}),
}


@dataclass(frozen=True)
class EnvelopeSpec:
    regime: Regime
    params: tuple = ()

    def __init__(self, regime, params: Optional[Mapping[str, float]] = None, **kw):
        regime = regime if isinstance(regime, Regime) else Regime.parse(str(regime))
        given = dict(params or {})
        given.update(kw)
        required, optional = _PARAMS[regime]
        unknown = set(given) - set(required) - set(optional)
        if unknown:
            raise DomainError(f"{regime.value} does not take parameters {sorted(unknown)}")
        missing = [k for k in required if k not in given]
        if missing:
            raise DomainError(f"{regime.value} needs parameters {missing}")
        values = {**optional, **{k: float(v) for k, v in given.items()}}
        for k, v in values.items():
            if not math.isfinite(v):
                raise DomainError(f"parameter {k} must be finite")
        _validate(regime, values)
        object.__setattr__(self, "regime", regime)
        object.__setattr__(self, "params", tuple(sorted(values.items())))

    def __getitem__(self, name: str) -> float:
        return dict(self.params)[name]

    def to_dict(self) -> dict:
        return {"regime": self.regime.value, **dict(self.params)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "EnvelopeSpec":
        d = dict(d)
        return cls(d.pop("regime"), d)

    @property
    def min_t(self) -> int:
        return LIL_MIN_T if self.regime is Regime.LIL_SCALE else 3

    def __call__(self, t):
        return envelope_value(self, t)


def _validate(regime: Regime, p: dict) -> None:
    def positive(*names):
        for n in names:
            if not p[n] > 0:
                raise DomainError(f"{regime.value}: {n} must be > 0, got {p[n]}")

    if regime is Regime.SUB_GAUSSIAN:
        positive("v", "eps")
    elif regime is Regime.SUB_EXPONENTIAL:
        positive("c", "eps")
    elif regime is Regime.PTH_MOMENT:
        if not p["p"] > 2:
            raise DomainError(f"PthMoment: p must be > 2, got {p['p']}")
        if not p["gamma"] > 1.0 / p["p"]:
            raise DomainError(f"PthMoment: gamma must exceed 1/p = {1.0 / p['p']}")
    elif regime is Regime.SECOND_MOMENT:
        if not p["gamma"] > 0.5:
            raise DomainError(f"SecondMoment: gamma must be > 1/2, got {p['gamma']}")
    elif regime is Regime.CONSTANT:
        positive("B")
    if "mu_abs" in p and p["mu_abs"] < 0:
        raise DomainError("mu_abs must be >= 0")


def lil_scale(t):
    """sqrt(t / loglog t), natural logs; needs t >= 16."""
    t = np.asarray(t, dtype=float)
    if np.any(t < LIL_MIN_T):
        raise DomainError(f"LIL scale needs t >= {LIL_MIN_T}")
    out = np.sqrt(t / np.log(np.log(t)))
    return float(out) if out.ndim == 0 else out


def _raw(spec: EnvelopeSpec, t: np.ndarray) -> np.ndarray:
    p = dict(spec.params)
    r = spec.regime
    if r is Regime.SUB_GAUSSIAN:
        return p["mu_abs"] + np.sqrt(2.0 * (p["v"] + p["eps"]) * np.log(t))
    if r is Regime.SUB_EXPONENTIAL:
        return p["mu_abs"] + (1.0 + p["eps"]) / p["c"] * np.log(t)
    if r is Regime.PTH_MOMENT:
        return t ** (1.0 / p["p"]) * np.log(t) ** p["gamma"]
    if r is Regime.SECOND_MOMENT:
        return np.sqrt(t) * np.log(t) ** p["gamma"]
    if r is Regime.LIL_SCALE:
        return np.sqrt(t / np.log(np.log(t)))
    return np.full_like(t, p["B"])


def envelope_raw(spec: EnvelopeSpec, t):
    """u_t before any running maximum."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < spec.min_t):
        raise DomainError(f"{spec.regime.value} is defined for t >= {spec.min_t}")
    out = _raw(spec, t_arr)
    return float(out) if out.ndim == 0 else out


def envelope_value(spec: EnvelopeSpec, t):
    """B_t for scalar or array t.

    For PthMoment and SecondMoment B_t = max_{3<=s<=t} u_s. On s >= 3 both
    u_s = s^{1/p} (log s)^gamma and sqrt(s) (log s)^gamma are increasing
    (d/ds log u_s = 1/(p s) + gamma/(s log s) > 0), so the running maximum
    is attained at s = t and B_t = u_t.
    """
    return envelope_raw(spec, t)


def envelope_scale_ratio(spec: EnvelopeSpec, t):
    """B_t / sqrt(t/loglog t)."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < LIL_MIN_T):
        raise DomainError(f"scale ratio needs t >= {LIL_MIN_T}")
    if spec.regime is Regime.LIL_SCALE:
        out = np.ones_like(t_arr)
    else:
        out = np.asarray(envelope_value(spec, t_arr)) / np.asarray(lil_scale(t_arr))
    return float(out) if out.ndim == 0 else out


def envelope_validity_trace(spec: EnvelopeSpec, samples):
    """Scan a path for containment max_{i<=t} |X_i| <= B_t.

    Returns ``(first_valid_t, violations)``. ``violations`` lists (i, t)
    pairs, 1-based: at time t the running maximum, first reached by sample
    i, lies outside the envelope. ``first_valid_t`` is the smallest t from
    which containment holds up to the end of the trace, or None when the
    last time step is itself a violation (or the trace is shorter than the
    envelope's domain).
    """
    x = np.abs(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise DomainError("trace needs at least one sample")
    t0 = spec.min_t
    if n < t0:
        return None, []
    running = np.maximum.accumulate(x)
    prev = np.concatenate([[-np.inf], running[:-1]])
    # 1-based index where the current running maximum was first reached
    origin = np.maximum.accumulate(np.where(x > prev, np.arange(1, n + 1), 0))
    t = np.arange(t0, n + 1)
    bad = running[t0 - 1:] > np.asarray(envelope_value(spec, t), dtype=float)
    viol_t = t[bad]
    violations = [(int(origin[s - 1]), int(s)) for s in viol_t]
    if viol_t.size == 0:
        return t0, violations
    last = int(viol_t[-1])
    return (last + 1 if last < n else None), violations


def summability_check(spec: EnvelopeSpec, t_max: int, chunk: int = 1 << 20):
    """Partial sum of 1/B_t^2 over 3 <= t <= t_max and an integral tail estimate.

    The tail estimate is int_{t_max}^inf ds / B_s^2, available in closed form
    for SecondMoment: (log t_max)^{1-2 gamma} / (2 gamma - 1). It dominates the
    remaining sum because 1/B_s^2 is decreasing.
    """
    if spec.regime is not Regime.SECOND_MOMENT:
        raise DomainError("closed-form tail only implemented for SecondMoment")
    g = spec["gamma"]
    head = math.fsum(
        float(np.sum(1.0 / np.asarray(envelope_value(spec, np.arange(lo, min(lo + chunk, t_max + 1)))) ** 2))
        for lo in range(3, t_max + 1, chunk)
    )
    tail = math.log(t_max) ** (1.0 - 2.0 * g) / (2.0 * g - 1.0)
    return head, tail
