"""Independent primal solver for the mean-constrained projection.

Used to cross-check the dual solver in tests and in ``klinf verify``. It
minimizes KL(nu || q) directly over probability vectors q on
supp(nu) + {upper} subject to sum_i q_i x_i >= m with a log-barrier
interior-point method (equality-constrained Newton steps, backtracking line
search kept strictly inside the feasible set). Every iterate is a feasible
primal point, so the returned value is an upper bound on the optimum, and
the barrier duality gap bounds the excess.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError, NoConvergence, SupportOutsideInterval
from .measures import DiscreteDistribution, SupportInterval


def _newton_center(q, y, p, tau, max_steps=200):
    """Minimize -sum p log q - (1/tau) sum log q over {q : 1.q = 1, y.q = y.q0}."""
    k = q.size
    pos = p > 0
    inv_tau = 1.0 / tau

    def barrier(q):
        if np.any(q <= 0):
            return math.inf
        return -float(np.dot(p[pos], np.log(q[pos]))) - inv_tau * float(np.sum(np.log(q)))

    # orthonormal basis of {d : 1.d = 0, y.d = 0}; steps along it keep both constraints
    constraints = np.vstack([np.ones(k), y])
    _, _, vt = np.linalg.svd(constraints)
    null = vt[2:].T
    f = barrier(q)
    for _ in range(max_steps):
        c = p + inv_tau
        grad = -c / q
        reduced_hess = null.T @ (null * (c / q**2)[:, None])
        step = null @ np.linalg.solve(reduced_hess, -(null.T @ grad))
        # predicted decrease, already in KL units; 1e-14 sits above the rounding floor
        decrement = -float(np.dot(grad, step))
        if decrement <= 1e-14:
            return q
        neg = step < 0
        alpha = min(1.0, 0.99 * float(np.min(-q[neg] / step[neg]))) if np.any(neg) else 1.0
        while True:
            cand = q + alpha * step
            if np.array_equal(cand, q):
                return q
            f_new = barrier(cand)
            if f_new <= f - 0.25 * alpha * decrement:
                break
            alpha *= 0.5
            if alpha < 1e-12:
                # rounding floor of the barrier value reached
                return q
        q, f = cand, f_new
    raise NoConvergence("centering step did not converge")


def klinf_oracle(
    nu: DiscreteDistribution,
    m: float,
    interval: SupportInterval,
    tol: float = 1e-10,
    max_outer: int = 60,
) -> float:
    """Primal value of KL_inf(nu, m) on [interval.lower, interval.upper], accurate to ``tol``.

    When mean(nu) < m the mean constraint binds at the optimum (otherwise
    moving q towards nu would lower the cost), so it is imposed as an
    equality and the barrier acts on positivity only.
    """
    b = interval.upper
    if not m < b:
        raise DomainError("oracle requires m strictly below the upper endpoint")
    if not interval.contains(nu):
        raise SupportOutsideInterval("nu is not supported inside the interval")
    keep = nu.weights > 0
    x, w = nu.support[keep], nu.weights[keep]
    if float(np.dot(w, x)) >= m:
        return 0.0
    if x[-1] == b:
        y, p = x.copy(), w.copy()
    else:
        y, p = np.append(x, b), np.append(w, 0.0)
    k = y.size
    # strictly positive start with mean exactly m: uniform mixed with an extreme atom
    q = np.full(k, 1.0 / k)
    ybar = float(np.dot(q, y))
    if ybar < m:
        s = (m - ybar) / (b - ybar)
        q *= 1.0 - s
        q[-1] += s
    elif ybar > m:
        s = (ybar - m) / (ybar - y[0])
        q *= 1.0 - s
        q[0] += s

    tau = 1.0
    target_gap = tol / 10.0
    for _ in range(max_outer):
        q = _newton_center(q, y, p, tau)
        if k / tau <= target_gap:
            pos = p > 0
            return max(float(np.dot(p[pos], np.log(p[pos]) - np.log(q[pos]))), 0.0)
        tau *= 8.0
    raise NoConvergence("barrier parameter cap reached before the duality gap closed")
