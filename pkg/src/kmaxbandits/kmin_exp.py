"""MLE-Exp for K-Min exponential bandits with full-bandit feedback.

Arm i has loss Exp(mu_i) with mu_i = <phi(i), theta*>. Playing S reveals
only min_{i in S} X_i, which is Exp(<psi(S), theta*>) with
psi(S) = sum_{i in S} phi(i). The learner fits theta by regularized
maximum likelihood, builds a confidence region around the fit, and plays
the subset with the largest optimistic rate.

The likelihood only depends on the history through the distinct psi
vectors, how often each was played, and sum_i loss_i * psi_i, so
``MleHistory`` keeps those aggregates alongside the raw rounds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import kernels
from ._subsets import DEFAULT_SUBSET_CAP, all_subsets, check_action
from .errors import DomainError, InputError, ModelError, SolverError

MIN_RATE_MARGIN = 1e-3


@dataclass(frozen=True)
class ExpLinearModel:
    theta_star: np.ndarray
    features: np.ndarray
    v_bound: float
    k: int
    min_margin: float = MIN_RATE_MARGIN

    def __post_init__(self):
        theta = np.asarray(self.theta_star, dtype=np.float64).ravel()
        phi = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        object.__setattr__(self, "theta_star", theta)
        object.__setattr__(self, "features", phi)
        if phi.shape[1] != theta.size:
            raise InputError(f"features have dimension {phi.shape[1]}, theta_star has {theta.size}")
        if not 1 <= self.k <= phi.shape[0]:
            raise InputError(f"need 1 <= K <= N, got K={self.k}, N={phi.shape[0]}")
        norms = np.linalg.norm(phi, axis=1)
        if norms.max() > 1 + 1e-12:
            raise InputError(f"feature norms must be <= 1, max is {norms.max():.6g}")
        if np.linalg.norm(theta) > self.v_bound + 1e-12:
            raise InputError(f"||theta*|| = {np.linalg.norm(theta):.6g} exceeds V = {self.v_bound}")
        rates = phi @ theta
        if rates.min() < self.min_margin:
            raise ModelError(
                f"arm rates must be >= {self.min_margin}, smallest is {rates.min():.6g}"
            )

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    @property
    def rates(self):
        return self.features @ self.theta_star

    def psi(self, s):
        return self.features[list(s)].sum(axis=0)


def _rate(model, s):
    s = check_action(s, model.n)
    rate = float(model.psi(s) @ model.theta_star)
    if not rate > 0:
        raise ModelError(f"action {s} has nonpositive rate {rate}")
    return rate


def sample_min_loss(model, s, rng):
    """Draw min_{i in s} X_i, which is exponential with the summed rate."""
    return -math.log1p(-rng.random()) / _rate(model, s)


def expected_min_loss(model, s):
    return 1.0 / _rate(model, s)


def max_expected_loss(model, cap=DEFAULT_SUBSET_CAP):
    """L* = sup_S E[loss | S] = 1 / min_S <psi(S), theta*>."""
    subsets = all_subsets(model.n, model.k, cap)
    return float(1.0 / (model.features[subsets].sum(axis=1) @ model.theta_star).min())


class MleHistory:
    """Past (action, loss, psi) triples plus the aggregates the likelihood needs."""

    def __init__(self, d):
        self.d = d
        self.rounds = []
        self._index = {}
        self._psi = np.zeros((0, d))
        self._counts = np.zeros(0)
        self.loss_psi = np.zeros(d)

    def __len__(self):
        return len(self.rounds)

    def append(self, s, loss, psi):
        if loss < 0:
            raise InputError(f"losses are nonnegative, got {loss}")
        s = tuple(sorted(int(i) for i in s))
        psi = np.asarray(psi, dtype=np.float64)
        self.rounds.append((s, float(loss), psi))
        row = self._index.get(s)
        if row is None:
            row = self._index[s] = len(self._counts)
            self._psi = np.vstack([self._psi, psi])
            self._counts = np.append(self._counts, 0.0)
        self._counts[row] += 1.0
        self.loss_psi += loss * psi

    def summary(self):
        """(distinct psi rows, play counts, sum of loss * psi)."""
        return self._psi, self._counts, self.loss_psi


def _terms(theta, history, lam):
    psi, counts, loss_psi = history.summary()
    return kernels.exp_nll_terms(np.asarray(theta, dtype=np.float64), psi, counts, loss_psi, lam)


def _in_domain(theta, history):
    psi, _, _ = history.summary()
    return psi.shape[0] == 0 or float((psi @ theta).min()) > 0


def neg_log_likelihood(theta, history, lam):
    """sum_i [-log(psi_i . theta) + (psi_i . theta) loss_i] + lam/2 ||theta||^2.

    Returns +inf outside the domain.
    """
    return float(_terms(theta, history, lam)[0])


def _checked_terms(theta, history, lam):
    value, grad, hess = _terms(theta, history, lam)
    if grad is None:
        raise DomainError("theta gives a nonpositive rate for a past action")
    return value, grad, hess


def grad_nll(theta, history, lam):
    return _checked_terms(theta, history, lam)[1]


def gradient_g(theta, history, lam):
    """g_t(theta) = sum_i psi_i / (psi_i . theta) - lam theta.

    Equals -grad_nll(theta) + sum_i loss_i psi_i.
    """
    return history.loss_psi - grad_nll(theta, history, lam)


def hessian_h(theta, history, lam):
    """lam I + sum_i psi_i psi_i^T / (psi_i . theta)^2."""
    return _checked_terms(theta, history, lam)[2]


def _usable_start(theta, history, lam):
    # in the domain is not enough: rates near 0 make the Hessian numerically singular
    if not _in_domain(theta, history):
        return False
    value, _, hess = _terms(theta, history, lam)
    return bool(np.isfinite(value) and np.all(np.isfinite(hess)) and np.linalg.cond(hess) < 1e12)


def _feasible_start(history, candidates, lam=1.0):
    for theta in candidates:
        if theta is not None:
            theta = np.asarray(theta, dtype=np.float64)
            if _usable_start(theta, history, lam):
                return theta.copy()
    psi, _, _ = history.summary()
    res = linprog(np.zeros(history.d), A_ub=-psi, b_ub=-np.ones(psi.shape[0]),
                  bounds=[(None, None)] * history.d, method="highs")
    if not res.success:
        raise SolverError("no parameter gives every past action a positive rate")
    return res.x


def fit_mle(history, lam, tol=1e-9, warm_start=None, v_bound=1.0, max_iter=100):
    """Minimize the regularized NLL by damped Newton.

    Steps are halved until the iterate stays in the open domain and the
    objective does not increase. Stops when ||grad|| <= tol; raises
    ``SolverError`` after ``max_iter`` iterations.
    """
    if lam <= 0 and len(history) == 0:
        raise InputError("need lam > 0 or a nonempty history")
    d = history.d
    theta = _feasible_start(history, [warm_start, np.full(d, v_bound / math.sqrt(d))], lam)
    value, grad, hess = _checked_terms(theta, history, lam)
    for _ in range(max_iter):
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol:
            return theta
        step = np.linalg.solve(hess, grad)
        alpha = 1.0
        slack = 1e-12 * max(1.0, abs(value))
        while True:
            cand = theta - alpha * step
            c_value, c_grad, c_hess = _terms(cand, history, lam)
            if c_grad is not None and c_value <= value + slack:
                break
            alpha *= 0.5
            if alpha < 1e-30:
                raise SolverError("line search failed", theta=theta, grad_norm=gnorm)
        theta, value, grad, hess = cand, c_value, c_grad, c_hess
    gnorm = float(np.linalg.norm(grad))
    if gnorm <= tol:
        return theta
    raise SolverError(f"no convergence in {max_iter} iterations (|grad| = {gnorm:.3g})",
                      theta=theta, grad_norm=gnorm)


def lambda_schedule(t, d, m1, v_bound, l_star, delta):
    """max{1, (2 d M1 / V) log(e sqrt(1 + t L*/d) + 1/delta)}."""
    inner = math.e * math.sqrt(1.0 + t * l_star / d) + 1.0 / delta
    return max(1.0, 2.0 * d * m1 / v_bound * math.log(inner))


def gamma_schedule(t, d, m1, v_bound, l_star, lambda_t, delta):
    """Confidence radius for the gradient-gap norm at round ``t``."""
    root = math.sqrt(lambda_t)
    return (
        root * (1.0 / (2.0 * m1) + v_bound)
        + 2.0 * m1 * d / root * (math.log(2.0) + 0.5 * math.log(1.0 + t * l_star / (lambda_t * d)))
        + 2.0 * m1 / root * math.log(1.0 / delta)
    )


def confidence_distance(theta, theta_hat, history, lam):
    """||g_t(theta) - g_t(theta_hat)|| in the H_t(theta)^-1 norm."""
    gap = gradient_g(theta, history, lam) - gradient_g(theta_hat, history, lam)
    x = np.linalg.solve(hessian_h(theta, history, lam), gap)
    return math.sqrt(max(float(gap @ x), 0.0))


def in_confidence_set(theta, theta_hat, history, lambda_t, gamma_t, v_bound=None):
    """Exact membership in the gradient-defined confidence set.

    Points with ||theta|| > v_bound lie outside the parameter set and are
    rejected; pass ``v_bound=None`` to skip that check.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if v_bound is not None and np.linalg.norm(theta) > v_bound + 1e-12:
        return False
    gap = gradient_g(theta, history, lambda_t) - gradient_g(theta_hat, history, lambda_t)
    x = np.linalg.solve(hessian_h(theta, history, lambda_t), gap)
    return bool(gap @ x <= gamma_t**2)


@dataclass
class MleState:
    theta_hat: np.ndarray
    lambda_t: float
    gamma_t: float
    hessian: np.ndarray
    history: MleHistory = field(repr=False)
    t: int = 1
    theta_tilde: np.ndarray | None = None

    def to_json(self):
        return {
            "t": self.t,
            "theta_hat": self.theta_hat.tolist(),
            "lambda_t": self.lambda_t,
            "gamma_t": self.gamma_t,
        }


def _project(theta, v_bound):
    norm = float(np.linalg.norm(theta))
    return theta if norm <= v_bound else theta * (v_bound / norm)


def optimistic_scores(psi_all, theta_hat, hessian, gamma_t):
    """psi . theta_hat + gamma ||psi||_{H^-1} for each row of ``psi_all``.

    Also returns H^-1 psi^T and the norms so the caller can build theta~.
    """
    hinv_psi = np.linalg.solve(hessian, psi_all.T)
    norms = np.sqrt(np.maximum(np.einsum("sd,ds->s", psi_all, hinv_psi), 0.0))
    return psi_all @ theta_hat + gamma_t * norms, hinv_psi, norms


def optimistic_select(model, theta_hat, state, gamma_t, subsets=None):
    """Subset with the largest optimistic rate over the ellipsoid around theta_hat.

    The ellipsoid is {theta : ||theta - theta_hat||_{H} <= gamma_t} with H
    the Hessian at theta_hat; the maximizing theta is projected onto the
    ball of radius V. Returns (subset, theta_tilde).
    """
    if subsets is None:
        subsets = all_subsets(model.n, model.k)
    psi_all = model.features[subsets].sum(axis=1)
    scores, hinv_psi, norms = optimistic_scores(psi_all, theta_hat, state.hessian, gamma_t)
    idx = int(np.argmax(scores))
    theta_tilde = theta_hat.copy()
    if norms[idx] > 0:
        theta_tilde = theta_tilde + gamma_t * hinv_psi[:, idx] / norms[idx]
    return tuple(int(i) for i in subsets[idx]), _project(theta_tilde, model.v_bound)


@dataclass(frozen=True)
class MleExpConfig:
    horizon: int
    delta: float | None = None
    l_star: float | None = None
    m1: float | None = None
    lambda_override: float | None = None
    gamma_override: float | None = None
    tol: float = 1e-9

    def resolved_delta(self):
        return self.delta if self.delta is not None else 1.0 / self.horizon


class MleExpPolicy:
    """MLE-Exp: refit, build the confidence region, play optimistically."""

    name = "mle_exp"

    def __init__(self, model, config):
        self.model = model
        self.config = config
        self.subsets = all_subsets(model.n, model.k)
        self.l_star = config.l_star if config.l_star is not None else max_expected_loss(model)
        self.m1 = config.m1 if config.m1 is not None else self.l_star / math.sqrt(2.0)
        self.delta = config.resolved_delta()
        d = model.d
        self.state = MleState(
            theta_hat=np.full(d, model.v_bound / math.sqrt(d)),
            lambda_t=1.0, gamma_t=0.0, hessian=np.eye(d), history=MleHistory(d),
        )

    def schedules(self, t):
        d, v = self.model.d, self.model.v_bound
        lam = self.config.lambda_override
        if lam is None:
            lam = lambda_schedule(t, d, self.m1, v, self.l_star, self.delta)
        gamma = self.config.gamma_override
        if gamma is None:
            gamma = gamma_schedule(t, d, self.m1, v, self.l_star, lam, self.delta)
        return lam, gamma

    def select(self):
        st = self.state
        t = len(st.history) + 1
        lam, gamma = self.schedules(t)
        warm = st.theta_hat if len(st.history) else None
        theta_hat = fit_mle(st.history, lam, tol=self.config.tol, warm_start=warm,
                            v_bound=self.model.v_bound)
        st.theta_hat, st.lambda_t, st.gamma_t, st.t = theta_hat, lam, gamma, t
        st.hessian = hessian_h(theta_hat, st.history, lam)
        s, st.theta_tilde = optimistic_select(self.model, theta_hat, st, gamma, self.subsets)
        return s

    def update(self, s, loss):
        self.state.history.append(s, loss, self.model.psi(s))

    def covers(self, theta):
        st = self.state
        return in_confidence_set(theta, st.theta_hat, st.history, st.lambda_t, st.gamma_t,
                                 v_bound=self.model.v_bound)

    def snapshot(self):
        return self.state.to_json()


def run_round(model, policy, rng):
    """Play one round of MLE-Exp; returns (action, loss)."""
    s = policy.select()
    loss = sample_min_loss(model, s, rng)
    policy.update(s, loss)
    return s, loss
