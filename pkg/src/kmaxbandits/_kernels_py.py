"""Pure numpy implementations of the hot kernels.

These are the reference versions; ``_ckernels.pyx`` must agree with them to
floating-point roundoff. Both take and return float64 / int64 arrays.
"""
import numpy as np


def subset_rewards(cum, subsets, values):
    """Expected maximum of the discrete arms for many subsets at once.

    ``cum[i, j]`` is P[X_i <= v_j] (the row-wise cumulative sum of a P-grid),
    ``subsets`` is an (S, K) integer array and ``values`` the bin values.
    """
    g = np.prod(cum[subsets], axis=1)
    dg = np.diff(g, axis=1, prepend=0.0)
    return dg @ values


def q_to_p(q):
    """Row-wise q -> p conversion with the deficit assigned to the first bin."""
    one_minus = 1.0 - q
    # tail[:, j] = prod_{j' > j} (1 - q[:, j'])
    tail = np.ones_like(q)
    tail[:, :-1] = np.cumprod(one_minus[:, :0:-1], axis=1)[:, ::-1]
    p = q * tail
    p[:, 0] += 1.0 - p.sum(axis=1)
    return p


def exp_nll_terms(theta, psi, counts, loss_psi, lam):
    """Value, gradient and Hessian of the regularized exponential NLL.

    The history is summarized by the distinct feature sums ``psi`` (U, d),
    how often each was played ``counts`` (U,) and ``loss_psi`` = sum of
    loss * psi over all rounds. Returns ``(inf, None, None)`` outside the
    domain {theta : psi @ theta > 0}.
    """
    rates = psi @ theta
    if rates.size and rates.min() <= 0.0:
        return np.inf, None, None
    value = -np.dot(counts, np.log(rates)) + loss_psi @ theta + 0.5 * lam * theta @ theta
    w = counts / rates
    grad = -(psi.T @ w) + loss_psi + lam * theta
    hess = (psi.T * (w / rates)) @ psi
    hess[np.diag_indices_from(hess)] += lam
    return value, grad, hess
