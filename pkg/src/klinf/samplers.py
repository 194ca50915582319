"""Seeded i.i.d. generators, including a symmetric finite-variance law with
an extremely heavy tail.

Streams are counter based: sample number ``i`` of seed ``s`` comes from
block ``i // BLOCK`` of a Philox generator keyed by ``s``, so the sequence a
seed produces does not depend on how many draws are requested at a time or
on which thread asks for them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import DomainError, InvalidDistribution, QuadratureFailure

BLOCK = 1 << 16

E_E = math.exp(math.e)
# flat survival level; makes the survival function continuous at e^e
A_ADV = math.exp(-(2.0 * math.e + 1.0))
ADV_SECOND_MOMENT = math.exp(-1.0) + 2.0
INVERSION_RTOL = 1e-12
INVERSION_DEPTH = 200


class Kind(str, Enum):
    BERNOULLI = "Bernoulli"
    UNIFORM_CONT = "UniformCont"
    UNIFORM_DISCRETE = "UniformDiscrete"
    GAUSSIAN = "Gaussian"
    EXPONENTIAL = "Exponential"
    PARETO_SYM = "ParetoSym"
    ADVERSARIAL_P2 = "AdversarialP2"

    @classmethod
    def parse(cls, name: str) -> "Kind":
        key = name.replace("_", "").replace("-", "").lower()
        for k in cls:
            if k.value.lower() == key:
                return k
        raise DomainError(f"unknown distribution kind {name!r}")


_DEFAULTS = {
    Kind.BERNOULLI: {"p": None},
    Kind.UNIFORM_CONT: {"a": 0.0, "b": 1.0},
    Kind.UNIFORM_DISCRETE: {"points": None, "weights": None},
    Kind.GAUSSIAN: {"mu": 0.0, "sigma": 1.0},
    Kind.EXPONENTIAL: {"rate": 1.0, "shift": 0.0},
    Kind.PARETO_SYM: {"alpha": None, "scale": 1.0},
    Kind.ADVERSARIAL_P2: {},
}


@dataclass(frozen=True)
class DistributionSpec:
    kind: Kind
    params: tuple = ()

    def __init__(self, kind, params: Optional[Mapping] = None, **kw):
        kind = kind if isinstance(kind, Kind) else Kind.parse(str(kind))
        given = dict(params or {})
        given.update(kw)
        defaults = _DEFAULTS[kind]
        unknown = set(given) - set(defaults)
        if unknown:
            raise InvalidDistribution(f"{kind.value} does not take parameters {sorted(unknown)}")
        values = {}
        for name, default in defaults.items():
            v = given.get(name, default)
            if v is None:
                if kind is Kind.UNIFORM_DISCRETE and name == "weights" and "points" in given:
                    n = len(given["points"])
                    v = [1.0 / n] * n
                else:
                    raise InvalidDistribution(f"{kind.value} needs parameter {name}")
            if isinstance(v, (list, tuple, np.ndarray)):
                v = tuple(float(x) for x in v)
            else:
                v = float(v)
            values[name] = v
        _validate(kind, values)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", tuple(values.items()))

    def __getitem__(self, name):
        return dict(self.params)[name]

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value}
        for k, v in self.params:
            out[k] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "DistributionSpec":
        d = dict(d)
        return cls(d.pop("kind"), d)

    @property
    def mean(self) -> float:
        p, k = dict(self.params), self.kind
        if k is Kind.BERNOULLI:
            return p["p"]
        if k is Kind.UNIFORM_CONT:
            return 0.5 * (p["a"] + p["b"])
        if k is Kind.UNIFORM_DISCRETE:
            return float(np.dot(p["points"], p["weights"]))
        if k is Kind.GAUSSIAN:
            return p["mu"]
        if k is Kind.EXPONENTIAL:
            return p["shift"] + 1.0 / p["rate"]
        return 0.0

    @property
    def variance(self) -> float:
        p, k = dict(self.params), self.kind
        if k is Kind.BERNOULLI:
            return p["p"] * (1.0 - p["p"])
        if k is Kind.UNIFORM_CONT:
            return (p["b"] - p["a"]) ** 2 / 12.0
        if k is Kind.UNIFORM_DISCRETE:
            x, w = np.asarray(p["points"]), np.asarray(p["weights"])
            return float(np.dot(w, (x - self.mean) ** 2))
        if k is Kind.GAUSSIAN:
            return p["sigma"] ** 2
        if k is Kind.EXPONENTIAL:
            return 1.0 / p["rate"] ** 2
        if k is Kind.PARETO_SYM:
            a = p["alpha"]
            return a * p["scale"] ** 2 / (a - 2.0)
        return ADV_SECOND_MOMENT

    @property
    def bounds(self) -> Optional[tuple]:
        """Almost-sure support bounds for the bounded kinds, else None."""
        p, k = dict(self.params), self.kind
        if k is Kind.BERNOULLI:
            return (0.0, 1.0)
        if k is Kind.UNIFORM_CONT:
            return (p["a"], p["b"])
        if k is Kind.UNIFORM_DISCRETE:
            return (min(p["points"]), max(p["points"]))
        return None


def _validate(kind: Kind, p: dict) -> None:
    if kind is Kind.BERNOULLI and not 0 < p["p"] < 1:
        raise InvalidDistribution("Bernoulli needs 0 < p < 1")
    if kind is Kind.UNIFORM_CONT and not p["a"] < p["b"]:
        raise InvalidDistribution("UniformCont needs a < b")
    if kind is Kind.UNIFORM_DISCRETE:
        x, w = np.asarray(p["points"]), np.asarray(p["weights"])
        if x.size == 0 or x.shape != w.shape:
            raise InvalidDistribution("UniformDiscrete needs matching nonempty points and weights")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))) or np.any(w < 0):
            raise InvalidDistribution("UniformDiscrete needs finite points and nonnegative weights")
        if abs(float(w.sum()) - 1.0) > 1e-9:
            raise InvalidDistribution("UniformDiscrete weights must sum to 1")
    if kind is Kind.GAUSSIAN and not p["sigma"] > 0:
        raise InvalidDistribution("Gaussian needs sigma > 0")
    if kind is Kind.EXPONENTIAL and not p["rate"] > 0:
        raise InvalidDistribution("Exponential needs rate > 0")
    if kind is Kind.PARETO_SYM and not (p["alpha"] > 2 and p["scale"] > 0):
        raise InvalidDistribution("ParetoSym needs alpha > 2 and scale > 0")


def parse_dist_spec(text: str) -> DistributionSpec:
    """Parse ``Kind`` or ``Kind:name=value,...``; list values are ';'-separated.

    >>> parse_dist_spec("Bernoulli:p=0.5")["p"]
    0.5
    """
    kind, _, rest = text.partition(":")
    params = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        name, eq, value = item.partition("=")
        if not eq:
            raise DomainError(f"expected name=value, got {item!r}")
        if ";" in value or name.strip() in ("points", "weights"):
            params[name.strip()] = [float(v) for v in value.split(";") if v]
        else:
            params[name.strip()] = float(value)
    return DistributionSpec(kind.strip(), params)


@dataclass
class RngState:
    """Position ``counter`` in the sample stream of ``seed``."""

    seed: int
    counter: int = 0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        self.seed = int(self.seed)

    def block_generator(self, k: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.seed, counter=[0, 0, 0, k]))


def _draw_block(spec: DistributionSpec, gen: np.random.Generator) -> np.ndarray:
    p, k = dict(spec.params), spec.kind
    if k is Kind.BERNOULLI:
        return (gen.random(BLOCK) < p["p"]).astype(float)
    if k is Kind.UNIFORM_CONT:
        return p["a"] + (p["b"] - p["a"]) * gen.random(BLOCK)
    if k is Kind.UNIFORM_DISCRETE:
        x = np.asarray(p["points"])
        cdf = np.cumsum(p["weights"])
        idx = np.searchsorted(cdf, gen.random(BLOCK) * cdf[-1], side="right")
        return x[np.minimum(idx, x.size - 1)]
    if k is Kind.GAUSSIAN:
        return p["mu"] + p["sigma"] * gen.standard_normal(BLOCK)
    if k is Kind.EXPONENTIAL:
        return p["shift"] + gen.standard_exponential(BLOCK) / p["rate"]
    if k is Kind.PARETO_SYM:
        u = 1.0 - gen.random(BLOCK)
        sign = np.where(gen.random(BLOCK) < 0.5, -1.0, 1.0)
        return sign * p["scale"] * u ** (-1.0 / p["alpha"])
    return _adversarial_block(gen, BLOCK)


def _block(spec: DistributionSpec, rng: RngState, k: int) -> np.ndarray:
    key = (spec, k)
    cached = rng._cache.get(key)
    if cached is None:
        cached = _draw_block(spec, rng.block_generator(k))
        rng._cache.clear()
        rng._cache[key] = cached
    return cached


def sample(spec: DistributionSpec, rng: RngState, size: Optional[int] = None):
    """Next draw (or next ``size`` draws) of ``spec`` from ``rng``'s stream."""
    n = 1 if size is None else int(size)
    if n < 0:
        raise DomainError("size must be nonnegative")
    start, stop = rng.counter, rng.counter + n
    parts = []
    pos = start
    while pos < stop:
        k, off = divmod(pos, BLOCK)
        take = min(BLOCK - off, stop - pos)
        parts.append(_block(spec, rng, k)[off:off + take])
        pos += take
    rng.counter = stop
    out = np.concatenate(parts) if parts else np.empty(0)
    return float(out[0]) if size is None else out


# --- the heavy-tailed finite-variance law ---------------------------------------


def _log_tail(z):
    """log S(e^z) on the tail branch z >= e."""
    return -2.0 * z - np.log(z) - 2.0 * np.log(np.log(z))


def adversarial_survival(y):
    """P(Y > y): A on [0, e^e), 1/(y^2 log y (loglog y)^2) beyond."""
    y_arr = np.asarray(y, dtype=float)
    if np.any(y_arr < 0) or np.any(np.isnan(y_arr)):
        raise DomainError("survival function is defined for y >= 0")
    out = np.full(y_arr.shape, A_ADV)
    tail = y_arr >= E_E
    if np.any(tail):
        yt = y_arr[tail]
        with np.errstate(divide="ignore"):
            out[tail] = 1.0 / (yt * yt * np.log(yt) * np.log(np.log(yt)) ** 2)
    return float(out) if out.ndim == 0 else out


def adversarial_quantile(q, rtol: float = INVERSION_RTOL, max_depth: int = INVERSION_DEPTH):
    """y >= e^e with S(y) = q, for q in (0, A]; bisection on log y.

    The upper end starts at 2 e^e and doubles until S drops below q; the
    bracket is then halved until its relative width is below ``rtol``.
    """
    q_arr = np.atleast_1d(np.asarray(q, dtype=float))
    if np.any(~((q_arr > 0) & (q_arr <= A_ADV))):
        raise DomainError("quantile level must lie in (0, A]")
    target = np.log(q_arr)
    lo = np.full(q_arr.shape, math.e)
    hi = lo + math.log(2.0)
    for _ in range(max_depth):
        short = _log_tail(hi) >= target
        if not np.any(short):
            break
        hi = np.where(short, hi + math.log(2.0), hi)
    else:
        raise DomainError("could not bracket the quantile")
    for _ in range(max_depth):
        if np.all(hi - lo <= rtol):
            break
        mid = 0.5 * (lo + hi)
        above = _log_tail(mid) >= target
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    else:
        raise DomainError("bisection depth cap reached")
    y = np.exp(0.5 * (lo + hi))
    y = np.where(q_arr == A_ADV, E_E, y)
    return float(y[0]) if np.ndim(q) == 0 else y


def _adversarial_block(gen: np.random.Generator, n: int) -> np.ndarray:
    positive = gen.random(n) < A_ADV
    k = int(positive.sum())
    out = np.zeros(n)
    if k:
        u = 1.0 - gen.random(k)  # (0, 1]
        sign = np.where(gen.random(k) < 0.5, -1.0, 1.0)
        out[positive] = sign * adversarial_quantile(A_ADV * u)
    return out


def sample_adversarial(rng: RngState, size: Optional[int] = None):
    return sample(DistributionSpec(Kind.ADVERSARIAL_P2), rng, size)


def adaptive_simpson(f, a: float, b: float, tol: float, max_depth: int = 50) -> float:
    """Adaptive Simpson rule with Richardson correction; QuadratureFailure past ``max_depth``."""

    def simpson(fa, fm, fb, a, b):
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left, right = simpson(fa, flm, fm, a, m), simpson(fm, frm, fb, m, b)
        delta = left + right - whole
        if abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        if depth >= max_depth:
            raise QuadratureFailure(f"adaptive Simpson exceeded depth {max_depth} on [{a}, {b}]")
        return recurse(a, m, fa, flm, fm, left, tol / 2, depth + 1) + recurse(
            m, b, fm, frm, fb, right, tol / 2, depth + 1
        )

    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    return recurse(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 0)


# cut in z = log y between the numerically integrated and the closed-form tail
_LOG_CUT = math.exp(2.0)


def adversarial_second_moment_parts(tol: float = 1e-10, max_depth: int = 50) -> dict:
    """E[Y^2] = 2 int_0^inf y S(y) dy split into head, middle and remainder.

    head:   2 int_0^{e^e} y A dy (flat region), by quadrature;
    middle: 2 int_{e^e}^{Y_c} y S(y) dy with y = e^z, integrand 2/(z (log z)^2);
    rest:   2 / log log Y_c, the closed form of the remaining tail.
    middle + rest equals the full tail integral 2.
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    head = adaptive_simpson(lambda y: 2.0 * y * A_ADV, 0.0, E_E, tol / 3, max_depth)
    middle = adaptive_simpson(
        lambda z: 2.0 / (z * math.log(z) ** 2), math.e, _LOG_CUT, tol / 3, max_depth
    )
    rest = 2.0 / math.log(_LOG_CUT)
    return {"head": head, "middle": middle, "rest": rest, "tail": middle + rest}


def adversarial_second_moment_quadrature(tol: float = 1e-10) -> float:
    p = adversarial_second_moment_parts(tol)
    return p["head"] + p["tail"]


def exceedance_bound_check(t_values: Sequence[int]):
    """(t, S(b_t), 1/(t log t loglog t)) with b_t = sqrt(t/loglog t)."""
    out = []
    for t in t_values:
        t = int(t)
        if t < 16:
            raise DomainError("exceedance check needs t >= 16")
        llt = math.log(math.log(t))
        b_t = math.sqrt(t / llt)
        if b_t < E_E:
            raise DomainError(f"b_t = {b_t:.6g} < e^e at t = {t}; outside the tail regime")
        out.append((t, adversarial_survival(b_t), 1.0 / (t * math.log(t) * llt)))
    return out
