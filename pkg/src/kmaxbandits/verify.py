"""Property suites behind ``kmaxbandits verify``.

Each suite returns a list of ``Check`` records with the measured value
and the threshold it was held to.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .discretize import (
    ProbGrid, binary_reward, binary_reward_bruteforce, cdf_to_p, discrete_reward, make_grid,
    p_to_q, q_to_p,
)
from .dck_ucb import DckConfig, DckUcbPolicy, Lemma4Tracker, lemma5_sides, optimistic_grid
from .env_continuous import ContinuousEnv, builtin_arm, expected_max_exact, sample_outcome_table, value_index_feedback
from .instances import KMIN_STANDARD_MODEL, kmax_standard_arms, random_arm, random_p_grid
from .kmin_exp import (
    ExpLinearModel, MleExpConfig, MleExpPolicy, MleHistory, fit_mle, grad_nll, hessian_h,
    neg_log_likelihood, sample_min_loss,
)
from .oracle import GREEDY_FACTOR, exact_oracle, greedy_oracle


@dataclass
class Check:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        text = f"[{status}] {self.name}: measured {self.measured:.6g} (threshold {self.threshold:.6g})"
        return text + (f" -- {self.detail}" if self.detail else "")


def lemma1_worst(rng, n_instances=50, quad_points=10_000):
    """Largest violation of 0 <= r*(S) - r_bar(S; p*) <= eps over random instances."""
    worst = -math.inf
    for _ in range(n_instances):
        n = int(rng.integers(3, 7))
        k = int(rng.choice([2, 3]))
        eps = float(rng.choice([0.25, 0.1, 0.05]))
        arms = [random_arm(rng, i) for i in range(n)]
        s = sorted(rng.choice(n, k, replace=False).tolist())
        grid = make_grid(eps)
        gap = expected_max_exact(arms, s, quad_points) - discrete_reward(s, cdf_to_p(arms, grid))
        worst = max(worst, -gap, gap - eps)
    return worst


def lemma2_worst(rng, n_grids=1000):
    worst = 0.0
    for _ in range(n_grids):
        n = int(rng.integers(1, 7))
        grid = make_grid(float(rng.choice([0.5, 0.25, 0.2, 0.1, 0.05])))
        p = random_p_grid(rng, n, grid)
        s = sorted(rng.choice(n, int(rng.integers(1, n + 1)), replace=False).tolist())
        worst = max(worst, abs(binary_reward(s, p_to_q(p)) - discrete_reward(s, p)))
    return worst


def bruteforce_worst(rng, n_grids=200):
    worst = 0.0
    for _ in range(n_grids):
        grid = make_grid(float(rng.choice([0.5, 0.4, 0.3])))  # M in {3, 4}
        k = int(rng.integers(1, 4))
        n = k + int(rng.integers(0, 3))
        q = p_to_q(random_p_grid(rng, n, grid))
        q = ProbGrid("Q", np.where(rng.random(q.entries.shape) < 0.5, rng.random(q.entries.shape), q.entries), grid)
        for s in itertools.combinations(range(n), k):
            worst = max(worst, abs(binary_reward(s, q) - binary_reward_bruteforce(s, q)))
    return worst


def monotonicity_worst(rng, n_grids=1000):
    worst = -math.inf
    for _ in range(n_grids):
        n = int(rng.integers(1, 7))
        grid = make_grid(float(rng.choice([0.5, 0.25, 0.1])))
        q = rng.random((n, grid.m))
        q_up = np.minimum(q + rng.random(q.shape) * rng.random(), 1.0)
        s = sorted(rng.choice(n, int(rng.integers(1, n + 1)), replace=False).tolist())
        lo = binary_reward(s, ProbGrid("Q", q, grid))
        hi = binary_reward(s, ProbGrid("Q", q_up, grid))
        worst = max(worst, lo - hi)
    return worst


def roundtrip_worst(rng, n_grids=1000):
    worst = 0.0
    for _ in range(n_grids):
        grid = make_grid(float(rng.choice([0.5, 0.25, 0.1, 0.05])))
        p = random_p_grid(rng, int(rng.integers(1, 7)), grid)
        worst = max(worst, float(np.abs(q_to_p(p_to_q(p)).entries - p.entries).max()))
    return worst


def verify_lemmas(seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    n = lambda base: max(1, int(base * scale))  # noqa: E731
    return [
        Check("lemma1 discretization error in [0, eps]", (w := lemma1_worst(rng, n(50))) <= 1e-8, w, 1e-8),
        Check("lemma2 binary reward equals discrete reward", (w := lemma2_worst(rng, n(1000))) <= 1e-12, w, 1e-12),
        Check("binary reward equals brute-force enumeration", (w := bruteforce_worst(rng, n(200))) <= 1e-12, w, 1e-12),
        Check("lemma3 monotone in q", (w := monotonicity_worst(rng, n(1000))) <= 1e-12, w, 1e-12),
        Check("p -> q -> p roundtrip", (w := roundtrip_worst(rng, n(1000))) <= 1e-12, w, 1e-12),
    ]


def greedy_worst_ratio(rng, n_instances=1000, n_max=12):
    worst = math.inf
    for _ in range(n_instances):
        n = int(rng.integers(2, n_max + 1))
        k = int(rng.integers(1, min(n, 5) + 1))
        p = random_p_grid(rng, n, make_grid(float(rng.choice([0.5, 0.25, 0.1]))), sparsity=0.3)
        best = exact_oracle(p, k).value
        if best > 0:
            worst = min(worst, greedy_oracle(p, k).value / best)
    return worst


def verify_oracle(seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    worst = greedy_worst_ratio(rng, max(1, int(1000 * scale)))
    return [Check("greedy / exact value ratio >= 1 - 1/e", worst >= GREEDY_FACTOR, worst, GREEDY_FACTOR,
                  "worst observed ratio")]


def lemma4_rate(seeds, horizon, epsilon=0.1):
    env = ContinuousEnv(tuple(builtin_arm(a.pop("kind"), label=i, **a)
                              for i, a in enumerate(kmax_standard_arms())), 2)
    L = max(a.lipschitz_upper for a in env.arms)
    config = DckConfig(epsilon, L, horizon, env.n, env.k)
    violations = checked = 0
    for seed in seeds:
        policy = DckUcbPolicy(config)
        q_star = p_to_q(cdf_to_p(env.arms, policy.state.grid))
        tracker = Lemma4Tracker(q_star, config)
        table = sample_outcome_table(env, horizon, np.random.default_rng(seed))
        for t in range(horizon):
            tracker.record(policy.state)
            s = policy.select()
            policy.update(s, value_index_feedback(table[t, list(s)], s))
        violations += tracker.violations
        checked += tracker.checked
    return violations / checked if checked else 0.0


def lemma5_worst(seed, horizon=2000, samples=500, epsilon=0.1):
    """Largest lhs - rhs of the decomposition inequality over sampled DCK-UCB rounds."""
    rng = np.random.default_rng(seed)
    env = ContinuousEnv(tuple(builtin_arm(a.pop("kind"), label=i, **a)
                              for i, a in enumerate(kmax_standard_arms())), 2)
    L = max(a.lipschitz_upper for a in env.arms)
    config = DckConfig(epsilon, L, horizon, env.n, env.k)
    policy = DckUcbPolicy(config)
    q_star = p_to_q(cdf_to_p(env.arms, policy.state.grid))
    table = sample_outcome_table(env, horizon, rng)
    picks = set(rng.choice(horizon, size=min(samples, horizon), replace=False).tolist())
    worst = -math.inf
    for t in range(horizon):
        q_bar = optimistic_grid(policy.state)
        s = policy.select()
        if t in picks:
            lhs, rhs = lemma5_sides(s, q_bar, q_star)
            worst = max(worst, lhs - rhs)
        policy.update(s, value_index_feedback(table[t, list(s)], s))
    return worst


def verify_concentration(seed=0, scale=1.0):
    horizon = max(100, int(10_000 * scale))
    n_seeds = max(2, int(20 * scale))
    rate = lemma4_rate(range(seed, seed + n_seeds), horizon)
    worst5 = lemma5_worst(seed, horizon=max(500, int(2000 * scale)))
    return [
        Check("lemma4 violation rate", rate <= 0.01, rate, 0.01, f"{n_seeds} seeds x {horizon} rounds"),
        Check("lemma5 decomposition (lhs - rhs)", worst5 <= 1e-10, worst5, 1e-10),
    ]


def _random_history(rng, d, rounds, theta):
    hist = MleHistory(d)
    for _ in range(rounds):
        psi = rng.uniform(0.1, 1.0, d)
        hist.append((int(rng.integers(0, 10**6)),), rng.exponential(1.0 / (psi @ theta)), psi)
    return hist


def mle_gradient_worst(rng, n_instances=100, h=1e-6):
    worst = 0.0
    for _ in range(n_instances):
        d = int(rng.integers(1, 5))
        theta = rng.uniform(0.2, 1.0, d)
        hist = _random_history(rng, d, int(rng.integers(1, 30)), theta)
        lam = float(rng.uniform(0.0, 3.0))
        fd = np.array([
            (neg_log_likelihood(theta + h * e, hist, lam) - neg_log_likelihood(theta - h * e, hist, lam)) / (2 * h)
            for e in np.eye(d)
        ])
        g = grad_nll(theta, hist, lam)
        worst = max(worst, float(np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1.0)))
    return worst


def mle_hessian_worst(rng, n_instances=100, h=1e-6):
    worst = 0.0
    for _ in range(n_instances):
        d = int(rng.integers(1, 5))
        theta = rng.uniform(0.2, 1.0, d)
        hist = _random_history(rng, d, int(rng.integers(1, 30)), theta)
        lam = float(rng.uniform(0.0, 3.0))
        fd = np.column_stack([
            (grad_nll(theta + h * e, hist, lam) - grad_nll(theta - h * e, hist, lam)) / (2 * h)
            for e in np.eye(d)
        ])
        H = hessian_h(theta, hist, lam)
        worst = max(worst, float(np.linalg.norm(fd - H) / max(np.linalg.norm(H), 1.0)))
    return worst


def closed_form_errors():
    hist = MleHistory(1)
    hist.append((0,), 2.0, np.array([1.0]))
    e0 = abs(fit_mle(hist, 0.0, v_bound=1.0)[0] - 0.5)
    e1 = abs(fit_mle(hist, 1.0, v_bound=1.0)[0] - (math.sqrt(2) - 1))
    return e0, e1


def coverage_rate(seeds, horizon, n_checkpoints=10, delta=0.01):
    model_spec = KMIN_STANDARD_MODEL
    model = ExpLinearModel(np.array(model_spec["theta_star"]), np.array(model_spec["features"]),
                           model_spec["v_bound"], 2)
    checkpoints = set(np.linspace(horizon / n_checkpoints, horizon, n_checkpoints).astype(int).tolist())
    hits = total = 0
    for seed in seeds:
        rng = np.random.default_rng(seed)
        policy = MleExpPolicy(model, MleExpConfig(horizon, delta=delta))
        for t in range(1, horizon + 1):
            s = policy.select()
            if t in checkpoints:
                hits += policy.covers(model.theta_star)
                total += 1
            policy.update(s, sample_min_loss(model, s, rng))
    return hits / total


def verify_mle(seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    n = max(10, int(100 * scale))
    g = mle_gradient_worst(rng, n)
    h = mle_hessian_worst(rng, n)
    e0, e1 = closed_form_errors()
    n_seeds = max(5, int(50 * scale))
    cov = coverage_rate(range(seed, seed + n_seeds), max(200, int(1000 * scale)))
    return [
        Check("gradient vs central differences (relative)", g <= 1e-5, g, 1e-5),
        Check("hessian vs differenced gradient (relative)", h <= 1e-4, h, 1e-4),
        Check("d=1 fit, lambda=0 -> 0.5", e0 <= 1e-8, e0, 1e-8),
        Check("d=1 fit, lambda=1 -> sqrt(2)-1", e1 <= 1e-8, e1, 1e-8),
        Check("confidence set coverage of theta*", cov >= 0.99, cov, 0.99, f"{n_seeds} seeds x 10 checkpoints"),
    ]


SUITES = {
    "lemmas": verify_lemmas,
    "oracle": verify_oracle,
    "concentration": verify_concentration,
    "mle": verify_mle,
}
