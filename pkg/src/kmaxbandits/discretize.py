"""Binning of continuous arms and the discrete / binary-arm reward functions.

Bins and arms are 0-based: bin ``j`` covers [j*eps, (j+1)*eps) and has value
``v_j = j * eps``. A P-grid holds p[i, j] = P[X_i in bin j]; a Q-grid holds
the conditional probabilities q[i, j] = p[i, j] / sum_{j' <= j} p[i, j'],
which turn each discrete arm into independent binary arms.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import CapacityError, InputError

BRUTEFORCE_MAX_CELLS = 20


@dataclass(frozen=True)
class BinGrid:
    epsilon: float
    m: int
    values: np.ndarray

    def __eq__(self, other):
        return (
            isinstance(other, BinGrid)
            and self.epsilon == other.epsilon
            and self.m == other.m
        )

    def __hash__(self):
        return hash((self.epsilon, self.m))


def make_grid(epsilon):
    """Grid with M = ceil(1/eps) bins, plus one when that leaves M*eps == 1.

    The extra bin keeps M*eps > 1 so that every r in [0, 1] lies in a bin;
    for arms supported on [0, 1] it carries no mass.
    """
    if not 0 < epsilon <= 0.5:
        raise InputError(f"epsilon must lie in (0, 1/2], got {epsilon}")
    m = math.ceil(1.0 / epsilon - 1e-12)
    if m * epsilon <= 1.0 + 1e-12:
        m += 1
    values = np.arange(m, dtype=np.float64) * epsilon
    return BinGrid(float(epsilon), m, values)


@dataclass(frozen=True)
class ProbGrid:
    """An N x M probability matrix in ``"P"`` or ``"Q"`` mode."""

    mode: str
    entries: np.ndarray
    grid: BinGrid

    def __post_init__(self):
        if self.mode not in ("P", "Q"):
            raise InputError(f"mode must be 'P' or 'Q', got {self.mode!r}")
        e = np.asarray(self.entries, dtype=np.float64)
        if e.ndim != 2 or e.shape[1] != self.grid.m:
            raise InputError(f"entries must be N x {self.grid.m}, got shape {e.shape}")
        object.__setattr__(self, "entries", e)

    @property
    def n(self):
        return self.entries.shape[0]

    def validate(self, tol=1e-12):
        e = self.entries
        if np.any(e < -tol) or np.any(e > 1 + tol):
            raise InputError("grid entries must lie in [0, 1]")
        if self.mode == "P":
            dev = np.abs(e.sum(axis=1) - 1.0).max(initial=0.0)
            if dev > tol:
                raise InputError(f"P-grid rows must sum to 1 (max deviation {dev:.3g})")
        return self

    def to_json(self):
        return {"mode": self.mode, "epsilon": self.grid.epsilon, "m": self.grid.m,
                "entries": self.entries.tolist()}


def bin_of(r, grid):
    """Index of the bin containing ``r``; r = 1 goes to the last bin."""
    if not 0.0 <= r <= 1.0:
        raise InputError(f"value {r} outside [0, 1]")
    return min(int(r / grid.epsilon), grid.m - 1)


def cdf_to_p(arms, grid):
    """Bin masses p[i, j] = F_i(min((j+1) eps, 1)) - F_i(min(j eps, 1))."""
    edges = np.minimum(np.arange(grid.m + 1) * grid.epsilon, 1.0)
    rows = []
    for arm in arms:
        f = np.asarray(arm.cdf(edges), dtype=np.float64)
        f[0], f[-1] = 0.0, 1.0
        rows.append(np.diff(f))
    p = np.clip(np.array(rows), 0.0, None)
    p /= p.sum(axis=1, keepdims=True)
    return ProbGrid("P", p, grid)


def p_to_q(p):
    """Convert a P-grid to the binary-arm Q-grid.

    A bin whose cumulative mass is zero gets q = 1 if it is the first bin
    and q = 0 otherwise; the reconstruction and every reward are unchanged.
    """
    e = p.entries
    cum = np.cumsum(e, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(cum > 0, e / np.where(cum > 0, cum, 1.0), 0.0)
    q[:, 0] = np.where(cum[:, 0] > 0, q[:, 0], 1.0)
    return ProbGrid("Q", np.clip(q, 0.0, 1.0), p.grid)


def q_to_p(q):
    """Convert a Q-grid back to bin masses.

    Rows of q with q[i, 0] < 1 reconstruct to less than unit mass; the
    deficit goes to the first bin, whose value is 0, so the upper tail that
    determines the maximum is kept exactly.
    """
    return ProbGrid("P", kernels.q_to_p(q.entries), q.grid)


def _subset_array(s):
    return np.asarray([tuple(int(i) for i in s)], dtype=np.int64)


def discrete_reward(s, p):
    """Expected maximum of the discretized arms in ``s`` under P-grid ``p``."""
    cum = np.cumsum(p.entries, axis=1)
    return float(kernels.subset_rewards(cum, _subset_array(s), p.grid.values)[0])


def tail_products(s, q):
    """Q_j(S; q) = prod_{k in S, j' > j} (1 - q[k, j']), for every bin j."""
    rows = 1.0 - q.entries[list(s)]
    m = q.grid.m
    out = np.ones(m)
    for j in range(m - 2, -1, -1):
        out[j] = out[j + 1] * np.prod(rows[:, j + 1])
    return out


def binary_reward(s, q):
    """Expected maximum of the binary arms {Y_kj : k in s} under Q-grid ``q``."""
    tail = tail_products(s, q)
    below_first = tail[0] * np.prod(1.0 - q.entries[list(s), 0])
    diffs = np.diff(tail, prepend=below_first)
    return float(diffs @ q.grid.values)


def binary_reward_bruteforce(s, q):
    """Enumerate all joint outcomes of the K*M binary arms; tiny instances only."""
    s = list(s)
    cells = len(s) * q.grid.m
    if cells > BRUTEFORCE_MAX_CELLS:
        raise CapacityError(f"K*M = {cells} exceeds the brute-force limit {BRUTEFORCE_MAX_CELLS}")
    probs = q.entries[s].ravel()
    vals = np.tile(q.grid.values, len(s))
    bits = np.array(list(itertools.product((0, 1), repeat=cells)), dtype=bool)
    weight = np.prod(np.where(bits, probs, 1.0 - probs), axis=1)
    best = np.max(np.where(bits, vals, 0.0), axis=1)
    return float(weight @ best)
