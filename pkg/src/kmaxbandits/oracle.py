"""Offline oracles for the discrete K-Max problem.

Given a P-grid and K, an oracle returns a size-K subset whose expected
discrete reward is at least ``approx_factor`` times the optimum. The exact
oracle enumerates every subset (factor 1); the greedy oracle adds arms by
marginal gain (factor 1 - 1/e, since the expected maximum is monotone
submodular in the chosen set).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from ._subsets import DEFAULT_SUBSET_CAP, all_subsets
from .errors import InputError

GREEDY_FACTOR = 1.0 - 1.0 / math.e


@dataclass(frozen=True)
class OracleResult:
    subset: tuple
    value: float
    approx_factor: float


def _check_k(p, k):
    if not 1 <= k <= p.n:
        raise InputError(f"need 1 <= K <= N, got K={k}, N={p.n}")


class SubsetTable:
    """Cached lexicographic subset array for repeated exact-oracle calls."""

    def __init__(self, n, k, cap=DEFAULT_SUBSET_CAP):
        self.n, self.k = n, k
        self.subsets = all_subsets(n, k, cap)

    def best(self, p):
        cum = np.cumsum(p.entries, axis=1)
        rewards = kernels.subset_rewards(cum, self.subsets, p.grid.values)
        idx = int(np.argmax(rewards))  # first maximum = lexicographic tie-break
        return OracleResult(tuple(int(i) for i in self.subsets[idx]), float(rewards[idx]), 1.0)


def exact_oracle(p, k, cap=DEFAULT_SUBSET_CAP):
    """True argmax of the discrete reward over all size-K subsets.

    Ties go to the lexicographically smallest subset. Raises
    ``CapacityError`` when C(N, K) exceeds ``cap``.
    """
    _check_k(p, k)
    return SubsetTable(p.n, k, cap).best(p)


def greedy_oracle(p, k):
    _check_k(p, k)
    cum = np.cumsum(p.entries, axis=1)
    values = p.grid.values
    chosen = []
    g = np.ones(p.grid.m)
    value = 0.0
    for _ in range(k):
        rest = [i for i in range(p.n) if i not in chosen]
        cand = g * cum[rest]
        gains = np.diff(cand, axis=1, prepend=0.0) @ values
        a = int(np.argmax(gains))  # lowest index among equal gains
        chosen.append(rest[a])
        g = cand[a]
        value = float(gains[a])
    return OracleResult(tuple(sorted(chosen)), value, GREEDY_FACTOR)


ORACLES = {"exact": exact_oracle, "greedy": greedy_oracle}
