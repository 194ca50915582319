"""Trajectory engine for the normalized statistic t * KL_inf(P_t, mu) / loglog t.

Each seed streams i.i.d. draws, keeps the full empirical multiset (or a
binned surrogate) and, at geometric checkpoints, solves the projection on
either a fixed interval or the envelope [-B_t, B_t]. All per-record moments
are computed from the canonical merged empirical measure, so a record at
time t does not depend on which other checkpoints were visited.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np

from .envelopes import EnvelopeSpec, envelope_value
from .errors import (
    DegenerateAtUpperBound,
    DomainError,
    MeanConstraintInfeasible,
    TiltInfeasible,
    ZeroVariance,
)
from .measures import DiscreteDistribution, EmpiricalAccumulator, RunningMoments, SupportInterval
from .projection import (
    affine_tilt,
    klinf_dual,
    quadratic_lower_bound,
    sprinkle_cost,
    tilt_analytic_cap,
)
from .samplers import DistributionSpec, RngState, sample
from .serialize import fmt

FIRST_CHECKPOINT = 16
DEFAULT_RATIO = 1.1
DEFAULT_BINS = 4096
QUANTILE_LEVELS = (0.1, 0.25, 0.5, 0.75, 0.9)
# rounding allowance for checks that are exact inequalities in real arithmetic
REL_SLACK = 1e-9
ABS_SLACK = 1e-15

LIMSUP_NOTE = (
    "running_max_normalized is the maximum over recorded checkpoints, "
    "a finite-horizon proxy for the almost-sure limsup, not the limsup itself"
)


@dataclass(frozen=True)
class FixedInterval:
    interval: SupportInterval


@dataclass(frozen=True)
class Envelope:
    spec: EnvelopeSpec


IntervalMode = Union[FixedInterval, Envelope]


@dataclass(frozen=True)
class SimConfig:
    dist: DistributionSpec
    interval_mode: IntervalMode
    horizon: int
    seeds: tuple = (0,)
    checkpoint_ratio: float = DEFAULT_RATIO
    binning: Optional[int] = None
    true_mean: Optional[float] = None
    extra_checkpoints: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "extra_checkpoints", tuple(int(t) for t in self.extra_checkpoints))
        if int(self.horizon) != self.horizon or self.horizon < FIRST_CHECKPOINT:
            raise DomainError(f"horizon must be an integer >= {FIRST_CHECKPOINT}")
        object.__setattr__(self, "horizon", int(self.horizon))
        if not 1.0 < self.checkpoint_ratio <= 2.0:
            raise DomainError("checkpoint_ratio must lie in (1, 2]")
        if not self.seeds:
            raise DomainError("at least one seed is required")
        if self.binning is not None and int(self.binning) < 1:
            raise DomainError("binning must be a positive bin count")
        mu = self.dist.mean
        if self.true_mean is None:
            object.__setattr__(self, "true_mean", mu)
        elif abs(self.true_mean - mu) > 1e-12 * max(1.0, abs(mu)):
            raise DomainError(f"true_mean {self.true_mean} differs from the analytic mean {mu}")
        if isinstance(self.interval_mode, FixedInterval):
            bounds = self.dist.bounds
            iv = self.interval_mode.interval
            if bounds is None:
                raise DomainError(f"{self.dist.kind.value} is unbounded; use an envelope")
            if bounds[0] < iv.lower or bounds[1] > iv.upper:
                raise DomainError("distribution support is not inside the fixed interval")
        elif not isinstance(self.interval_mode, Envelope):
            raise DomainError("interval_mode must be FixedInterval or Envelope")

    @property
    def mu(self) -> float:
        return float(self.true_mean)

    def to_dict(self) -> dict:
        mode = self.interval_mode
        if isinstance(mode, FixedInterval):
            m = {"fixed": [mode.interval.lower, mode.interval.upper]}
        else:
            m = {"envelope": mode.spec.to_dict()}
        return {
            "dist": self.dist.to_dict(),
            "true_mean": self.mu,
            "interval_mode": m,
            "horizon": self.horizon,
            "checkpoint_ratio": self.checkpoint_ratio,
            "seeds": list(self.seeds),
            "binning": self.binning,
            "extra_checkpoints": list(self.extra_checkpoints),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = {"dist", "true_mean", "interval_mode", "horizon", "checkpoint_ratio",
                 "seeds", "binning", "extra_checkpoints"}
        unknown = set(d) - known
        if unknown:
            raise DomainError(f"unknown config fields {sorted(unknown)}")
        mode = d["interval_mode"]
        if set(mode) == {"fixed"}:
            lo, hi = mode["fixed"]
            im = FixedInterval(SupportInterval(float(lo), float(hi)))
        elif set(mode) == {"envelope"}:
            im = Envelope(EnvelopeSpec.from_dict(mode["envelope"]))
        else:
            raise DomainError("interval_mode must have exactly one of 'fixed' or 'envelope'")
        return cls(
            dist=DistributionSpec.from_dict(d["dist"]),
            interval_mode=im,
            horizon=d["horizon"],
            seeds=tuple(d.get("seeds", (0,))),
            checkpoint_ratio=float(d.get("checkpoint_ratio", DEFAULT_RATIO)),
            binning=d.get("binning"),
            true_mean=d.get("true_mean"),
            extra_checkpoints=tuple(d.get("extra_checkpoints", ())),
        )

    @classmethod
    def from_json(cls, text: str) -> "SimConfig":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class TrajectoryRecord:
    t: int
    mean: float
    variance: float
    deficit: float
    B_t: float
    klinf: float
    normalized: float
    quad_proxy: float
    tilt_bound: Optional[float]
    r_t: float
    lambda_star: float
    at_boundary: bool
    envelope_ok: bool
    error: str = ""
    # diagnostics consumed by check_record
    lower_bound: float = -math.inf
    tilt_cap: float = math.inf
    width: float = math.nan
    klinf_lo: Optional[float] = None
    klinf_hi: Optional[float] = None

    @property
    def ok(self) -> bool:
        return not self.error


CSV_COLUMNS = (
    "seed", "t", "mean", "variance", "deficit", "B_t", "klinf", "normalized",
    "quad_proxy", "tilt_bound", "r_t", "lambda_star", "at_boundary", "envelope_ok", "error",
)
BINNED_COLUMNS = ("klinf_lo", "klinf_hi")


@dataclass(frozen=True)
class SeedSummary:
    seed: int
    running_max_normalized: float
    argmax_t: Optional[int]
    final_ratio: Optional[float]
    final_ratio_t: Optional[int]


def checkpoints(horizon: int, ratio: float = DEFAULT_RATIO, extra: Iterable[int] = ()) -> List[int]:
    """t_0 = 16, t_{k+1} = min(T, ceil(t_k * ratio)), plus any extra times in [16, T]."""
    if horizon < FIRST_CHECKPOINT:
        raise DomainError(f"horizon must be >= {FIRST_CHECKPOINT}")
    grid = [FIRST_CHECKPOINT]
    while grid[-1] < horizon:
        grid.append(min(horizon, math.ceil(grid[-1] * ratio)))
    for t in extra:
        if not FIRST_CHECKPOINT <= t <= horizon:
            raise DomainError(f"extra checkpoint {t} outside [{FIRST_CHECKPOINT}, {horizon}]")
    return sorted(set(grid) | set(int(t) for t in extra))


def normalized_statistic(t: int, klinf: float) -> float:
    """t * klinf / loglog t."""
    if t < FIRST_CHECKPOINT:
        raise DomainError(f"normalized statistic needs t >= {FIRST_CHECKPOINT}")
    if klinf == 0:
        return 0.0
    return t * klinf / math.log(math.log(t))


def binned_measures(nu: DiscreteDistribution, bins: int):
    """Snap atoms to the lower and upper edges of equal-width bins over [min, max].

    g(lam) = E log(1 + lam (m - X)) decreases in every atom, so the measure
    snapped down has the larger dual value and brackets KL_inf from above;
    the measure snapped up brackets it from below.
    """
    lo, hi = nu.lower, nu.upper
    if len(nu) <= bins or lo == hi:
        return nu, nu
    edges = np.linspace(lo, hi, bins + 1)
    idx = np.clip(np.searchsorted(edges, nu.support, side="right") - 1, 0, bins - 1)
    w = np.bincount(idx, weights=nu.weights, minlength=bins)
    keep = w > 0
    down = DiscreteDistribution(edges[:-1][keep], w[keep])
    up = DiscreteDistribution(edges[1:][keep], w[keep])
    return down, up


def _interval_at(config: SimConfig, t: int):
    mode = config.interval_mode
    if isinstance(mode, FixedInterval):
        iv = mode.interval
        return iv, 0.5 * iv.width, iv.width
    b = float(envelope_value(mode.spec, t))
    return SupportInterval(-b, b), b, 2.0 * b


def _solve(nu, mu, iv):
    try:
        return klinf_dual(nu, mu, iv), ""
    except (MeanConstraintInfeasible, DegenerateAtUpperBound) as e:
        return None, e.code


def make_record(config: SimConfig, t: int, nu: DiscreteDistribution, max_abs: float) -> TrajectoryRecord:
    mu = config.mu
    mean, var = nu.mean, nu.variance
    deficit = max(mu - mean, 0.0)
    iv, b_t, width = _interval_at(config, t)
    if isinstance(config.interval_mode, FixedInterval):
        contained = iv.contains(nu)
    else:
        contained = max_abs <= b_t
    errors = []
    klinf, lam, boundary = math.inf, math.nan, False
    k_lo = k_hi = None
    if not contained:
        errors.append("SupportOutsideInterval")
    elif config.binning:
        down, up = binned_measures(nu, int(config.binning))
        s_hi, e1 = _solve(down, mu, iv)
        s_lo, e2 = _solve(up, mu, iv)
        if e1 or e2:
            errors.append(e1 or e2)
        else:
            k_lo, k_hi = s_lo.value, s_hi.value
            klinf = 0.5 * (k_lo + k_hi)
            lam, boundary = s_hi.lambda_star, s_hi.at_boundary
    else:
        sol, err = _solve(nu, mu, iv)
        if err:
            errors.append(err)
        else:
            klinf, lam, boundary = sol.value, sol.lambda_star, sol.at_boundary

    if deficit == 0:
        quad, r_t = 0.0, 0.0
    elif var > 0:
        quad, r_t = deficit * deficit / (2.0 * var), deficit * width / var
    else:
        quad, r_t = math.nan, math.inf

    tilt = None
    lower, cap = -math.inf, math.inf
    if contained:
        try:
            tilt = affine_tilt(nu, mu, iv).kl_cost
        except (TiltInfeasible, ZeroVariance):
            tilt = None
        if var > 0 or deficit == 0:
            lower, _ = quadratic_lower_bound(deficit, var, width)
            cap = tilt_analytic_cap(deficit, var, r_t)

    return TrajectoryRecord(
        t=int(t),
        mean=mean,
        variance=var,
        deficit=deficit,
        B_t=b_t,
        klinf=klinf,
        normalized=normalized_statistic(t, klinf),
        quad_proxy=quad,
        tilt_bound=tilt,
        r_t=r_t,
        lambda_star=lam,
        at_boundary=boundary,
        envelope_ok=contained,
        error=";".join(errors),
        lower_bound=lower,
        tilt_cap=cap,
        width=width,
        klinf_lo=k_lo,
        klinf_hi=k_hi,
    )


def run_trajectory(config: SimConfig, seed: int) -> List[TrajectoryRecord]:
    rng = RngState(seed)
    acc = EmpiricalAccumulator()
    moments = RunningMoments()
    records = []
    drawn = 0
    for t in checkpoints(config.horizon, config.checkpoint_ratio, config.extra_checkpoints):
        chunk = sample(config.dist, rng, t - drawn)
        drawn = t
        acc.add(chunk)
        moments.extend(chunk)
        records.append(make_record(config, t, acc.measure(), moments.max_abs))
    return records


def default_threads() -> int:
    env = os.environ.get("KLINF_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise DomainError(f"KLINF_THREADS must be an integer, got {env!r}")
        if n >= 1:
            return n
    return 1


def run_seeds(config: SimConfig, threads: Optional[int] = None) -> List[tuple]:
    """[(seed, records)] in increasing seed order, whatever the worker count."""
    seeds = sorted(config.seeds)
    n = threads or default_threads()
    if n <= 1 or len(seeds) == 1:
        runs = [run_trajectory(config, s) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            runs = list(pool.map(lambda s: run_trajectory(config, s), seeds))
    return list(zip(seeds, runs))


def summarize_seed(seed: int, records: Sequence[TrajectoryRecord]) -> SeedSummary:
    best, arg = 0.0, None
    for r in records:
        if r.ok and (arg is None or r.normalized > best):
            best, arg = r.normalized, r.t
    ratio, ratio_t = None, None
    for r in reversed(records):
        if r.ok and r.deficit > 0 and r.quad_proxy > 0 and math.isfinite(r.quad_proxy):
            ratio, ratio_t = r.klinf / r.quad_proxy, r.t
            break
    return SeedSummary(int(seed), best, arg, ratio, ratio_t)


def _quantiles(values):
    if not values:
        return {str(q): None for q in QUANTILE_LEVELS}
    # inverted_cdf picks order statistics, so duplicating every run leaves it unchanged
    qs = np.quantile(np.asarray(values, dtype=float), QUANTILE_LEVELS, method="inverted_cdf")
    return {str(q): float(v) for q, v in zip(QUANTILE_LEVELS, qs)}


def aggregate_seeds(runs, seeds: Optional[Sequence[int]] = None):
    """Per-seed summaries plus pooled quantiles of running max and final ratio.

    ``runs`` is either a list of record lists (seeds default to 0..n-1) or the
    [(seed, records)] output of ``run_seeds``.
    """
    runs = list(runs)
    if not runs:
        raise DomainError("need at least one run")
    if isinstance(runs[0], tuple):
        pairs = runs
    else:
        seeds = list(seeds) if seeds is not None else list(range(len(runs)))
        pairs = list(zip(seeds, runs))
    summaries = [summarize_seed(s, r) for s, r in pairs]
    rmax = [s.running_max_normalized for s in summaries if s.argmax_t is not None]
    ratios = [s.final_ratio for s in summaries if s.final_ratio is not None]
    return summaries, _quantiles(rmax), _quantiles(ratios)


def check_record(r: TrajectoryRecord) -> dict:
    """Deterministic inequalities every error-free record must satisfy.

    sandwich: klinf <= tilt_bound (feasible tilt)
    lower:    klinf >= dual value at lam = deficit/variance, Taylor-bounded (r_t < 1)
    cap:      tilt_bound <= quad_proxy (1 + 2r/(3(1-r)^3)) (r_t < 1)
    Each entry is True, False, or None when the check does not apply.
    """
    out = {"sandwich": None, "lower": None, "cap": None}
    if not r.ok:
        return out
    k = r.klinf_lo if r.klinf_lo is not None else r.klinf
    k_up = r.klinf_hi if r.klinf_hi is not None else r.klinf
    if r.tilt_bound is not None:
        out["sandwich"] = k <= r.tilt_bound * (1.0 + REL_SLACK) + ABS_SLACK
    if r.deficit > 0 and r.r_t < 1:
        out["lower"] = k_up >= r.lower_bound - REL_SLACK * abs(r.lower_bound) - ABS_SLACK
        if r.tilt_bound is not None:
            out["cap"] = r.tilt_bound <= r.tilt_cap * (1.0 + REL_SLACK) + ABS_SLACK
    return out


@dataclass(frozen=True)
class CollapseRow:
    t: int
    mean: float
    deficit: float
    B_small: float
    B_large: float
    normalized_small: float
    normalized_large: float
    eps: float
    sprinkle_cap: float
    eligible: bool


def envelope_collapse_experiment(
    config: SimConfig, reference: EnvelopeSpec, seed: Optional[int] = None
) -> List[CollapseRow]:
    """Same path under ``reference`` and under the (larger) envelope of ``config``.

    ``sprinkle_cap`` is the normalized cost of moving mass eps_t to B_t,
    eps_t = deficit / (B_t - mean), an explicit upper bound on the large-envelope
    statistic when the data lie inside [-B_t, B_t].
    """
    if not isinstance(config.interval_mode, Envelope):
        raise DomainError("collapse experiment needs an envelope interval mode")
    seed = config.seeds[0] if seed is None else seed
    large = run_trajectory(config, seed)
    small = run_trajectory(replace(config, interval_mode=Envelope(reference)), seed)
    rows = []
    for a, b in zip(small, large):
        eps, cap = math.nan, math.inf
        if b.envelope_ok and b.deficit > 0 and b.B_t > b.mean:
            eps = b.deficit / (b.B_t - b.mean)
            if eps < 1:
                cap = normalized_statistic(b.t, sprinkle_cost(eps))
        elif b.deficit == 0:
            eps, cap = 0.0, 0.0
        eligible = a.ok and b.ok and b.deficit > 0
        rows.append(CollapseRow(b.t, b.mean, b.deficit, a.B_t, b.B_t, a.normalized, b.normalized, eps, cap, eligible))
    return rows


# --- serialization ----------------------------------------------------------------


def records_to_csv(runs, binned: bool = False, header_notes: Sequence[str] = ()) -> str:
    cols = CSV_COLUMNS + (BINNED_COLUMNS if binned else ())
    lines = [f"# {note}" for note in header_notes]
    lines.append(",".join(cols))
    for seed, records in runs:
        for r in records:
            row = asdict(r)
            row["seed"] = seed
            lines.append(",".join(fmt(row[c]) for c in cols))
    return "\n".join(lines) + "\n"


def records_to_gnuplot(runs) -> str:
    """Whitespace-separated blocks, one per seed, separated by two blank lines."""
    cols = CSV_COLUMNS[1:-1]
    blocks = []
    for seed, records in runs:
        body = [f"# seed {seed}", "# " + " ".join(cols)]
        for r in records:
            row = asdict(r)
            body.append(" ".join(fmt(row[c]) or "?" for c in cols))
        blocks.append("\n".join(body))
    return "\n\n\n".join(blocks) + "\n"


def summary_dict(config: SimConfig, runs) -> dict:
    summaries, q_max, q_ratio = aggregate_seeds(runs)
    return {
        "note": LIMSUP_NOTE,
        "config": config.to_dict(),
        "binned": bool(config.binning),
        "seeds": [asdict(s) for s in summaries],
        "quantiles_running_max_normalized": q_max,
        "quantiles_final_ratio": q_ratio,
    }
