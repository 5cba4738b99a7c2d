"""DCK-UCB: optimistic discretized learning for continuous K-Max bandits.

Each arm is discretized into M bins and represented by M binary arms with
parameters q[i, j]. The learner keeps two counters per (arm, bin):

* ``c[i, j]``  -- rounds where arm i won with the maximum in bin j,
* ``sc[i, j]`` -- rounds where arm i was played and the maximum fell in a
  bin <= j,

estimates q_hat = c / sc, inflates it by a confidence bonus plus a
tie-breaking bias term, and plays the oracle's best subset for the
inflated grid.

Bins are 0-based here, so the bias term for bin ``j`` is
(K - 1) L^4 / (j + 1)^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .discretize import BinGrid, ProbGrid, bin_of, binary_reward, make_grid, q_to_p, tail_products
from .env_continuous import ValueIndexFeedback
from .errors import ConsistencyError, InputError
from .oracle import ORACLES, SubsetTable

LOG_ARGS = ("NMT", "NMt")


def default_epsilon(n, k, lipschitz, horizon, c0=1.0):
    """Granularity c0 * L^-2 K^-3/4 N^1/4 T^-1/4, clamped to [1e-3, 0.5]."""
    if min(n, k, lipschitz, horizon, c0) <= 0:
        raise InputError("default_epsilon needs positive arguments")
    raw = c0 * lipschitz**-2 * k**-0.75 * n**0.25 * horizon**-0.25
    return min(max(raw, 1e-3), 0.5)


@dataclass(frozen=True)
class DckConfig:
    epsilon: float
    lipschitz: float
    horizon: int
    n: int
    k: int
    oracle_choice: str = "exact"
    bonus_log_arg: str = "NMT"

    def __post_init__(self):
        if not 0 < self.epsilon <= 0.5:
            raise InputError(f"epsilon must lie in (0, 1/2], got {self.epsilon}")
        if self.lipschitz < 1:
            raise InputError(f"lipschitz must be >= 1, got {self.lipschitz}")
        if not 1 <= self.k <= self.n:
            raise InputError(f"need 1 <= K <= N, got K={self.k}, N={self.n}")
        if self.horizon < 1:
            raise InputError(f"horizon must be >= 1, got {self.horizon}")
        if self.oracle_choice not in ORACLES:
            raise InputError(f"oracle_choice must be one of {sorted(ORACLES)}")
        if self.bonus_log_arg not in LOG_ARGS:
            raise InputError(f"bonus_log_arg must be one of {LOG_ARGS}")


@dataclass
class CounterState:
    c: np.ndarray
    sc: np.ndarray
    t: int = 0


@dataclass
class DckState:
    config: DckConfig
    counters: CounterState
    grid: BinGrid
    q_hat: np.ndarray
    last_action: tuple | None = None
    approx_factor: float = 1.0
    bias: np.ndarray = field(repr=False, default=None)
    _table: SubsetTable | None = field(repr=False, default=None)

    def to_json(self):
        return {
            "t": self.counters.t,
            "epsilon": self.grid.epsilon,
            "m": self.grid.m,
            "c": self.counters.c.tolist(),
            "sc": self.counters.sc.tolist(),
            "q_hat": self.q_hat.tolist(),
            "last_action": list(self.last_action) if self.last_action else None,
            "approx_factor": self.approx_factor,
        }


def _initial_q(n, m):
    q = np.zeros((n, m))
    q[:, 0] = 1.0
    return q


def new_state(config):
    grid = make_grid(config.epsilon)
    n, m = config.n, grid.m
    counters = CounterState(np.zeros((n, m), dtype=np.int64), np.zeros((n, m), dtype=np.int64))
    j = np.arange(1, m + 1, dtype=np.float64)
    bias = (config.k - 1) * config.lipschitz**4 / j**2
    table = SubsetTable(n, config.k) if config.oracle_choice == "exact" else None
    return DckState(config, counters, grid, _initial_q(n, m), bias=bias, _table=table)


def _log_term(state):
    cfg = state.config
    horizon = cfg.horizon if cfg.bonus_log_arg == "NMT" else state.counters.t + 1
    return math.log(cfg.n * state.grid.m * horizon)


def bonus_from_counts(sc, log_term):
    """sqrt(8 log_term / sc), with +inf where sc == 0."""
    sc = np.asarray(sc, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return np.where(sc > 0, np.sqrt(8.0 * log_term / np.where(sc > 0, sc, 1.0)), np.inf)


def bonus(state, i, j):
    """Exploration bonus for arm ``i``, bin ``j`` at the current round."""
    return float(bonus_from_counts(state.counters.sc[i, j], _log_term(state)))


def bonus_matrix(state):
    return bonus_from_counts(state.counters.sc, _log_term(state))


def optimistic_grid(state):
    """q_bar = min(q_hat + bonus + bias, 1), as a Q-grid."""
    q_bar = np.minimum(state.q_hat + bonus_matrix(state) + state.bias, 1.0)
    return ProbGrid("Q", q_bar, state.grid)


def select_action(state):
    p_bar = q_to_p(optimistic_grid(state))
    if state._table is not None:
        result = state._table.best(p_bar)
    else:
        result = ORACLES[state.config.oracle_choice](p_bar, state.config.k)
    state.last_action = result.subset
    state.approx_factor = result.approx_factor
    return result.subset


def update(state, s, feedback):
    """Fold one round of value-index feedback into the counters and q_hat."""
    s = tuple(int(i) for i in s)
    if feedback.winner not in s:
        raise ConsistencyError(f"winner {feedback.winner} is not in the played action {s}")
    j_t = feedback.bin if feedback.bin is not None else bin_of(feedback.reward, state.grid)
    cnt = state.counters
    cnt.c[feedback.winner, j_t] += 1
    rows = list(s)
    cnt.sc[rows, j_t:] += 1
    cnt.t += 1
    sc = cnt.sc[rows]
    fresh = np.divide(cnt.c[rows], sc, out=np.zeros(sc.shape), where=sc > 0)
    state.q_hat[rows] = np.where(sc > 0, fresh, _initial_q(len(rows), state.grid.m))


def with_bin(feedback, grid):
    return ValueIndexFeedback(feedback.reward, feedback.winner, bin_of(feedback.reward, grid))


def lemma4_bound(sc, log_term, bias):
    return bonus_from_counts(sc, log_term) + bias


def lemma4_violation_rate(q_hat_trace, sc_trace, q_star, config, log_terms=None):
    """Fraction of (t, i, j) with sc > 0 where |q_hat - q*| exceeds bonus + bias.

    ``q_hat_trace[t]`` and ``sc_trace[t]`` are the estimator and counters
    in force when round t+1 is chosen (after t updates). ``log_terms``
    overrides the per-round log argument; by default it follows
    ``config.bonus_log_arg``.
    """
    q_hat_trace = np.asarray(q_hat_trace, dtype=np.float64)
    sc_trace = np.asarray(sc_trace)
    if q_hat_trace.shape != sc_trace.shape:
        raise InputError("q_hat and sc traces differ in shape")
    if q_hat_trace.size == 0:
        return 0.0
    m = q_star.grid.m
    if q_hat_trace.shape[1:] != q_star.entries.shape:
        raise InputError(f"trace entries must be {q_star.entries.shape}, got {q_hat_trace.shape[1:]}")
    if log_terms is None:
        rounds = np.arange(1, q_hat_trace.shape[0] + 1)
        horizon = config.horizon if config.bonus_log_arg == "NMT" else rounds
        log_terms = np.log(config.n * m * np.broadcast_to(horizon, rounds.shape).astype(np.float64))
    j = np.arange(1, m + 1, dtype=np.float64)
    bias = (config.k - 1) * config.lipschitz**4 / j**2
    bound = lemma4_bound(sc_trace, np.asarray(log_terms)[:, None, None], bias)
    seen = sc_trace > 0
    err = np.abs(q_hat_trace - q_star.entries)
    bad = (err > bound + 1e-12) & seen
    total = int(seen.sum())
    return float(bad.sum() / total) if total else 0.0


class Lemma4Tracker:
    """Streams the concentration-bound check over a run without storing the whole trace."""

    def __init__(self, q_star, config):
        self.q_star = q_star
        self.config = config
        self.violations = 0
        self.checked = 0

    def record(self, state):
        seen = state.counters.sc > 0
        bound = lemma4_bound(state.counters.sc, _log_term(state), state.bias)
        err = np.abs(state.q_hat - self.q_star.entries)
        self.violations += int(((err > bound + 1e-12) & seen).sum())
        self.checked += int(seen.sum())

    @property
    def rate(self):
        return self.violations / self.checked if self.checked else 0.0


def bonus_bias_diagnostics(state, s, q_star):
    """The Bonus_t and Bias_t terms of the per-round regret decomposition.

    Both weight each (arm, bin) by Q*_j(S) v_j, the true probability that
    the maximum lands at or below bin j times the bin value. Bin 0 has
    value 0 and never contributes, even when its bonus is infinite.
    """
    s = list(s)
    weight = tail_products(s, q_star) * state.grid.values
    beta = bonus_matrix(state)[s]
    with np.errstate(invalid="ignore"):
        bonus_terms = np.where(weight > 0, weight * beta, 0.0)
    bonus_t = 4.0 * float(bonus_terms.sum())
    bias_t = 4.0 * float(len(s) * (weight @ state.bias))
    return bonus_t, bias_t


def lemma5_sides(s, q_bar, q_star):
    """Both sides of r_q(S; q_bar) - r_q(S; q*) <= 2 sum Q*_j v_j |q_bar - q*|."""
    s = list(s)
    lhs = binary_reward(s, q_bar) - binary_reward(s, q_star)
    weight = tail_products(s, q_star) * q_star.grid.values
    rhs = 2.0 * float((np.abs(q_bar.entries[s] - q_star.entries[s]) @ weight).sum())
    return lhs, rhs


class DckUcbPolicy:
    """DCK-UCB wrapped for the experiment harness."""

    name = "dck_ucb"

    def __init__(self, config):
        self.config = config
        self.state = new_state(config)

    def select(self):
        return select_action(self.state)

    def update(self, s, feedback):
        update(self.state, s, with_bin(feedback, self.state.grid))

    def snapshot(self):
        return self.state.to_json()
