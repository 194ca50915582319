"""Self-check suites behind ``klinf verify``.

Each suite returns a ``CheckResult``; a failing result carries the first
offending instance in a JSON-ready form so it can be replayed.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from .envelopes import EnvelopeSpec, envelope_scale_ratio, envelope_value
from .errors import TiltInfeasible, ZeroVariance
from .measures import DiscreteDistribution, SupportInterval, kl_divergence
from .oracle import klinf_oracle
from .projection import affine_tilt, dv_lower_bound, klinf_dual, taylor_neg_log_bounds
from .samplers import ADV_SECOND_MOMENT, adversarial_second_moment_quadrature, exceedance_bound_check
from .simulation import checkpoints

ORACLE_TOL = 1e-10


@dataclass
class CheckResult:
    name: str
    passed: bool
    max_violation: float
    seconds: float = 0.0
    instances: int = 0
    failing: Optional[dict] = None
    detail: Dict[str, float] = field(default_factory=dict)


def random_instance(rng: np.random.Generator, max_atoms: int = 20):
    """Random (nu, m, interval) with at most ``max_atoms`` atoms and m inside [a, b)."""
    a = rng.uniform(-5.0, 5.0)
    b = a + rng.uniform(0.1, 10.0)
    k = int(rng.integers(1, max_atoms + 1))
    x = rng.uniform(a, b, k)
    if rng.random() < 0.2:
        x[0] = b
    w = rng.dirichlet(np.ones(k))
    m = rng.uniform(a, b)
    return DiscreteDistribution(x, w), float(m), SupportInterval(float(a), float(b))


def _instance_dict(nu, m, iv) -> dict:
    return {"support": nu.support.tolist(), "weights": nu.weights.tolist(), "m": m,
            "interval": [iv.lower, iv.upper]}


def duality_suite(n: int = 1000, seed: int = 1, tol: float = 1e-6) -> CheckResult:
    """dual <= oracle <= tilt and |dual - oracle| <= tol on random instances."""
    rng = np.random.default_rng(seed)
    worst, failing = 0.0, None
    tilt_excess = 0.0
    for _ in range(n):
        nu, m, iv = random_instance(rng)
        dual = klinf_dual(nu, m, iv).value
        primal = klinf_oracle(nu, m, iv, tol=ORACLE_TOL)
        gap = abs(dual - primal)
        ok = gap <= tol and dual <= primal + 1e-12
        try:
            tilt = affine_tilt(nu, m, iv).kl_cost
            excess = primal - tilt
            tilt_excess = max(tilt_excess, excess)
            ok = ok and excess <= ORACLE_TOL
        except (TiltInfeasible, ZeroVariance):
            tilt = None
        worst = max(worst, gap)
        if not ok and failing is None:
            failing = {**_instance_dict(nu, m, iv), "dual": dual, "oracle": primal, "tilt": tilt}
    return CheckResult("duality", failing is None, worst, instances=n, failing=failing,
                       detail={"max_oracle_minus_tilt": tilt_excess})


def quadrature_suite(tol: float = 1e-6) -> CheckResult:
    value = adversarial_second_moment_quadrature(tol=1e-10)
    err = abs(value - ADV_SECOND_MOMENT)
    failing = None if err <= tol else {"quadrature": value, "reference": ADV_SECOND_MOMENT}
    return CheckResult("quadrature", failing is None, err, instances=1, failing=failing)


def taylor_suite(n: int = 10_000, seed: int = 2) -> CheckResult:
    rng = np.random.default_rng(seed)
    r = rng.uniform(1e-6, 0.9, n)
    u = rng.uniform(-1.0, 1.0, n) * r
    upper, lower = taylor_neg_log_bounds(u, r)
    f = -np.log1p(u)
    viol = np.maximum(lower - f, f - upper)
    bad = np.flatnonzero(viol > 0)
    failing = None
    if bad.size:
        i = int(bad[0])
        failing = {"u": float(u[i]), "r": float(r[i]), "f": float(f[i]),
                   "lower": float(lower[i]), "upper": float(upper[i])}
    return CheckResult("taylor", failing is None, float(max(viol.max(), 0.0)), instances=n, failing=failing)


def dv_suite(n: int = 1000, seed: int = 3) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst, failing = 0.0, None
    for _ in range(n):
        k = int(rng.integers(1, 21))
        x = np.sort(rng.choice(np.arange(100.0), size=k, replace=False))
        nu = DiscreteDistribution(x, rng.dirichlet(np.ones(k)))
        q = DiscreteDistribution(x, rng.dirichlet(np.ones(k)))
        phi = rng.normal(0.0, 3.0, k)
        dv, kl = dv_lower_bound(nu, q, phi), kl_divergence(nu, q)
        excess = dv - kl
        worst = max(worst, excess)
        if excess > 1e-12 and failing is None:
            failing = {"support": x.tolist(), "nu": nu.weights.tolist(), "q": q.weights.tolist(),
                       "phi": phi.tolist(), "dv": dv, "kl": kl}
    return CheckResult("dv", failing is None, max(worst, 0.0), instances=n, failing=failing)


def exceedance_suite(t_values=(10**4, 10**6, 10**8)) -> CheckResult:
    rows = exceedance_bound_check(t_values)
    failing = None
    worst = 0.0
    for t, s, lb in rows:
        worst = max(worst, lb - s)
        if s < lb and failing is None:
            failing = {"t": t, "survival": s, "lower": lb}
    return CheckResult("exceedance", failing is None, max(worst, 0.0), instances=len(rows), failing=failing)


DEFAULT_ENVELOPES = (
    EnvelopeSpec("SubGaussian", v=1.0, eps=0.1),
    EnvelopeSpec("SubExponential", c=1.0, eps=0.1),
    EnvelopeSpec("PthMoment", p=4.0, gamma=0.5),
    EnvelopeSpec("SecondMoment", gamma=0.6),
    EnvelopeSpec("LILScale"),
    EnvelopeSpec("Constant", B=3.0),
)


def envelopes_suite() -> CheckResult:
    grid = np.array(checkpoints(10**7, 1.1), dtype=float)
    failing, worst = None, 0.0
    for spec in DEFAULT_ENVELOPES:
        values = np.asarray(envelope_value(spec, grid))
        drop = float(np.max(values[:-1] - values[1:], initial=0.0))
        worst = max(worst, drop)
        if drop > 0 and failing is None:
            failing = {"envelope": spec.to_dict(), "check": "nondecreasing", "max_drop": drop}
        lo, hi = envelope_scale_ratio(spec, 10**4), envelope_scale_ratio(spec, 10**7)
        expect = {"SecondMoment": hi > lo, "LILScale": hi == lo == 1.0, "Constant": hi < lo}
        ok = expect.get(spec.regime.value, hi < lo)
        if not ok and failing is None:
            failing = {"envelope": spec.to_dict(), "check": "scale ratio", "ratio_1e4": lo, "ratio_1e7": hi}
    return CheckResult("envelopes", failing is None, worst, instances=len(DEFAULT_ENVELOPES), failing=failing)


SUITES: Dict[str, Callable[..., CheckResult]] = {
    "duality": duality_suite,
    "quadrature": quadrature_suite,
    "taylor": taylor_suite,
    "dv": dv_suite,
    "exceedance": exceedance_suite,
    "envelopes": envelopes_suite,
}


def run_suite(name: str, **kw) -> List[CheckResult]:
    names = list(SUITES) if name == "all" else [name]
    out = []
    for n in names:
        start = time.perf_counter()
        res = SUITES[n](**{k: v for k, v in kw.items() if k in SUITES[n].__code__.co_varnames})
        res.seconds = time.perf_counter() - start
        out.append(res)
    return out
