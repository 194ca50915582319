"""Mean-constrained KL projections of discrete measures.

``klinf_dual`` maximizes the one-dimensional concave dual

    g(lam) = sum_i w_i log(1 + lam (m - x_i)),   0 <= lam <= 1/(b - m),

which lower-bounds KL(nu || Q) for every Q on [a, b] with mean >= m. The
primal constructions (affine tilt, boundary sprinkling) give explicit feasible
competitors and hence upper bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .errors import (
    DegenerateAtUpperBound,
    DomainError,
    MeanConstraintInfeasible,
    SprinkleInfeasible,
    SupportOutsideInterval,
    TiltInfeasible,
    ZeroVariance,
)
from .measures import DiscreteDistribution, RunningMoments, SupportInterval, kl_divergence

# Bisection stopping rule: bracket width relative to lam_max, or |g'|.
XTOL = 1e-14
GTOL = 1e-12
MAX_ITER = 500
# Relative back-off from lam_max used to decide whether the supremum sits on the boundary.
BOUNDARY_PROBE = 1e-12


@dataclass(frozen=True)
class DualSolution:
    lambda_star: float
    value: float
    at_boundary: bool
    iterations: int
    derivative_residual: float


@dataclass(frozen=True)
class TiltResult:
    tilted: DiscreteDistribution
    theta: float
    radius: float
    kl_cost: float


def _charged(nu: DiscreteDistribution):
    keep = nu.weights > 0
    return nu.support[keep], nu.weights[keep]


def dual_objective(nu: DiscreteDistribution, m: float, lam: float) -> float:
    """g(lam) = E_nu log(1 + lam (m - X)); -inf when some atom leaves the domain."""
    x, w = _charged(nu)
    z = lam * (m - x)
    if np.any(z <= -1.0):
        return -math.inf
    return float(np.dot(w, np.log1p(z)))


def dual_derivative(nu: DiscreteDistribution, m: float, lam: float) -> float:
    x, w = _charged(nu)
    d = m - x
    return float(np.dot(w, d / (1.0 + lam * d)))


def klinf_dual(
    nu: DiscreteDistribution,
    m: float,
    interval: SupportInterval,
    *,
    xtol: float = XTOL,
    gtol: float = GTOL,
    max_iter: int = MAX_ITER,
) -> DualSolution:
    """KL_inf(nu, m) over P([lower, upper]) through its one-dimensional dual.

    The maximizer is bracketed by bisection on the decreasing derivative g';
    a Newton step is taken whenever it lands strictly inside the bracket.
    When nu puts no mass at ``upper`` and g' is still positive next to
    lam_max = 1/(upper - m), the supremum is the boundary closed form
    sum_i w_i log((upper - x_i)/(upper - m)).
    """
    b = interval.upper
    if not interval.contains(nu):
        raise SupportOutsideInterval(
            f"support [{nu.lower}, {nu.upper}] not inside [{interval.lower}, {b}]"
        )
    if m > b:
        raise MeanConstraintInfeasible(f"target mean {m} above upper endpoint {b}")
    if nu.mean >= m:
        return DualSolution(0.0, 0.0, False, 0, 0.0)
    if m == b:
        raise DegenerateAtUpperBound("target mean equals the upper endpoint; value is +inf")

    x, w = _charged(nu)
    d = m - x
    lam_max = 1.0 / (b - m)

    def grad(lam):
        return float(np.dot(w, d / (1.0 + lam * d)))

    def curvature(lam):
        s = d / (1.0 + lam * d)
        return float(np.dot(w, s * s))

    if x[-1] < b:
        g_edge = grad(lam_max * (1.0 - BOUNDARY_PROBE))
        if g_edge > 0:
            value = float(np.dot(w, np.log(b - x) - math.log(b - m)))
            return DualSolution(lam_max, max(value, 0.0), True, 0, g_edge)

    lo, hi = 0.0, lam_max
    lam = 0.0
    g_lam = grad(0.0)
    iterations = 0
    while iterations < max_iter:
        iterations += 1
        c = curvature(lam)
        step = lam + g_lam / c if c > 0 else -1.0  # no curvature: bisect
        lam = step if lo < step < hi else 0.5 * (lo + hi)
        g_lam = grad(lam)
        if abs(g_lam) <= gtol:
            break
        if g_lam > 0:
            lo = lam
        else:
            hi = lam
        if hi - lo <= xtol * lam_max:
            break
    value = float(np.dot(w, np.log1p(lam * d)))
    return DualSolution(lam, max(value, 0.0), False, iterations, abs(g_lam))


def klinf_value(nu: DiscreteDistribution, m: float, interval: SupportInterval) -> float:
    """Like ``klinf_dual(...).value`` but returns ``math.inf`` for an empty constraint set."""
    try:
        return klinf_dual(nu, m, interval).value
    except (MeanConstraintInfeasible, DegenerateAtUpperBound):
        return math.inf


def affine_tilt(
    nu: DiscreteDistribution, m: float, interval: SupportInterval | None = None
) -> TiltResult:
    """Competitor with density 1 + theta (x - mean) w.r.t. nu, theta = deficit/variance.

    ``radius`` is theta times the interval width (the support span when no
    interval is given): the uniform bound on |theta (x - mean)|.
    """
    mean = nu.mean
    if mean >= m:
        return TiltResult(nu, 0.0, 0.0, 0.0)
    var = nu.variance
    if var == 0:
        raise ZeroVariance("cannot tilt a point mass")
    theta = (m - mean) / var
    x, w = nu.support, nu.weights
    factors = 1.0 + theta * (x - mean)
    bad = factors[w > 0]
    if bad.min() <= 0:
        raise TiltInfeasible(
            f"tilt factor {bad.min():.6g} <= 0: deficit too large for the spread of nu"
        )
    width = interval.width if interval is not None else nu.upper - nu.lower
    total = float(np.dot(w, factors))
    if abs(total - 1.0) > 1e-9:
        # theta * sum w (x - mean) should vanish; huge theta amplifies rounding in the mean
        raise TiltInfeasible(f"tilt weights sum to {total!r}: variance too small to tilt stably")
    tilted = DiscreteDistribution(x, w * factors)
    xc, wc = _charged(nu)
    kl_cost = -float(np.dot(wc, np.log1p(theta * (xc - mean))))
    return TiltResult(tilted, theta, theta * width, max(kl_cost, 0.0))


def tilt_upper_bound(nu: DiscreteDistribution, m: float, interval: SupportInterval) -> float:
    if not interval.contains(nu):
        raise SupportOutsideInterval("nu is not supported inside the interval")
    return affine_tilt(nu, m, interval).kl_cost


def tilt_analytic_cap(deficit: float, variance: float, radius: float) -> float:
    """(deficit^2 / 2 var) (1 + 2r / (3 (1 - r)^3)); only meaningful for r < 1."""
    if deficit <= 0:
        return 0.0
    if not radius < 1:
        return math.inf
    return deficit * deficit / (2.0 * variance) * (1.0 + 2.0 * radius / (3.0 * (1.0 - radius) ** 3))


def quadratic_proxy(
    moments: Union[RunningMoments, DiscreteDistribution, Sequence[float]], m: float
) -> float:
    """(m - mean)_+^2 / (2 var) from running moments, a measure, or a (mean, var) pair."""
    if isinstance(moments, (RunningMoments, DiscreteDistribution)):
        mean, var = moments.mean, moments.variance
    else:
        mean, var = moments
    deficit = max(m - mean, 0.0)
    if deficit == 0:
        return 0.0
    if var <= 0:
        raise ZeroVariance("quadratic proxy undefined for zero variance with a positive deficit")
    return deficit * deficit / (2.0 * var)


def quadratic_lower_bound(deficit: float, variance: float, width: float) -> tuple[float, float]:
    """Dual evaluated at lam = deficit/variance, bounded below by Taylor control.

    Returns ``(bound, radius)`` with radius = lam * width, where
    bound = D^2/(2v) - D^4/(2v^2) - width^3 D^3 / (3 (1-r)^3 v^3).
    The bound is valid whenever radius < 1; otherwise it is ``-inf``.
    """
    if deficit <= 0:
        return 0.0, 0.0
    lam = deficit / variance
    r = lam * width
    if not r < 1:
        return -math.inf, r
    bound = (
        deficit**2 / (2.0 * variance)
        - deficit**4 / (2.0 * variance**2)
        - width**3 / (3.0 * (1.0 - r) ** 3) * deficit**3 / variance**3
    )
    return bound, r


def sprinkle_cost(eps: float) -> float:
    """-log(1 - eps): KL cost of moving mass eps out of nu."""
    return -math.log1p(-eps)


def sprinkle(
    nu: DiscreteDistribution, m: float, B: float, lower: float | None = None
) -> tuple[DiscreteDistribution, float, float]:
    """Mix nu with an atom at B, q = (1 - eps) nu + eps delta_B, so that mean(q) = m.

    nu must live on [lower, B]; ``lower`` defaults to -B.
    """
    lower = -B if lower is None else lower
    if not (nu.lower >= lower and nu.upper <= B):
        raise SupportOutsideInterval(f"nu not supported in [{lower}, {B}]")
    if m >= B:
        raise SprinkleInfeasible(f"target {m} is not below the sprinkling point {B}")
    mean = nu.mean
    if m <= mean:
        return nu, 0.0, 0.0
    eps = (m - mean) / (B - mean)
    q = DiscreteDistribution(
        np.append(nu.support, B), np.append((1.0 - eps) * nu.weights, eps)
    )
    return q, eps, sprinkle_cost(eps)


def degenerate_sweep(
    nu: DiscreteDistribution, m: float, M_values: Sequence[float]
) -> list[tuple[float, float]]:
    """Cost -log(1 - eps_M) of (1 - eps) nu + eps delta_M at the smallest feasible eps.

    Without an upper bound on the support these costs go to 0 as M grows.
    """
    mean = nu.mean
    if not m > mean:
        raise DomainError(f"target {m} must exceed the mean {mean}")
    out = []
    for M in M_values:
        if not M > m:
            raise DomainError(f"sprinkling point {M} must exceed the target {m}")
        eps = (m - mean) / (M - mean)
        out.append((float(M), sprinkle_cost(eps)))
    return out


def union_support(nu: DiscreteDistribution, q: DiscreteDistribution) -> np.ndarray:
    return np.union1d(nu.support, q.support)


def dv_lower_bound(
    nu: DiscreteDistribution,
    q: DiscreteDistribution,
    phi: Union[Callable[[np.ndarray], np.ndarray], Sequence[float]],
) -> float:
    """Donsker-Varadhan bound  int phi dnu - log int e^phi dq  (never above KL(nu||q)).

    ``phi`` is either a vectorized callable or a sequence of values on
    ``union_support(nu, q)``.
    """
    if callable(phi):
        f_nu, f_q = np.asarray(phi(nu.support), float), np.asarray(phi(q.support), float)
    else:
        grid = union_support(nu, q)
        vals = np.asarray(phi, dtype=float)
        if vals.shape != grid.shape:
            raise DomainError(f"phi has {vals.size} values, union support has {grid.size} points")
        f_nu = vals[np.searchsorted(grid, nu.support)]
        f_q = vals[np.searchsorted(grid, q.support)]
    if not (np.all(np.isfinite(f_nu)) and np.all(np.isfinite(f_q))):
        raise DomainError("phi must be finite on both supports")
    charged = q.weights > 0
    return float(np.dot(nu.weights, f_nu)) - float(logsumexp(f_q[charged], b=q.weights[charged]))


def taylor_neg_log_bounds(u, r):
    """Two-sided cubic control of f(u) = -log(1 + u) on |u| <= r < 1.

    upper = -u + u^2/2 + |u|^3 / (3 (1-r)^3)
    lower = -u + u^2/2 - |u|^3 / (3 (1-r)^3)

    Both follow from the Lagrange remainder f'''(xi) u^3 / 6 with
    |f'''(xi)| <= 2 / (1 - r)^3.
    """
    u_arr, r_arr = np.asarray(u, dtype=float), np.asarray(r, dtype=float)
    if np.any(~((r_arr > 0) & (r_arr < 1))):
        raise DomainError("r must lie in (0, 1)")
    if np.any(np.abs(u_arr) > r_arr):
        raise DomainError("|u| must not exceed r")
    quad = -u_arr + 0.5 * u_arr * u_arr
    cubic = np.abs(u_arr) ** 3 / (3.0 * (1.0 - r_arr) ** 3)
    upper, lower = quad + cubic, quad - cubic
    if upper.ndim == 0:
        return float(upper), float(lower)
    return upper, lower
