import itertools
import math

import numpy as np
import pytest

from kmaxbandits._subsets import all_subsets
from kmaxbandits.discretize import ProbGrid, discrete_reward, make_grid
from kmaxbandits.errors import CapacityError, InputError
from kmaxbandits.instances import random_p_grid
from kmaxbandits.oracle import GREEDY_FACTOR, SubsetTable, exact_oracle, greedy_oracle


def grid_p(rows, eps=0.5):
    g = make_grid(eps)
    e = np.zeros((len(rows), g.m))
    e[:, : len(rows[0])] = rows
    return ProbGrid("P", e, g)


def test_exact_oracle_example():
    p = grid_p([[0.5, 0.5], [0.5, 0.5], [0.9, 0.1]])
    r = exact_oracle(p, 2)
    assert r.subset == (0, 1)
    assert r.value == pytest.approx(0.375, abs=1e-15)
    assert r.approx_factor == 1.0
    assert discrete_reward((0, 2), p) == pytest.approx(0.275)


def test_exact_oracle_full_set():
    p = random_p_grid(np.random.default_rng(0), 5, make_grid(0.2))
    assert exact_oracle(p, 5).subset == (0, 1, 2, 3, 4)


def test_identical_rows_tie_break():
    p = grid_p([[0.3, 0.7]] * 5)
    assert exact_oracle(p, 3).subset == (0, 1, 2)
    assert greedy_oracle(p, 3).subset == (0, 1, 2)


def test_capacity_error():
    p = random_p_grid(np.random.default_rng(0), 20, make_grid(0.5))
    with pytest.raises(CapacityError, match="greedy"):
        exact_oracle(p, 10, cap=1000)


def test_bad_k():
    p = grid_p([[0.5, 0.5]])
    for k in (0, 2):
        with pytest.raises(InputError):
            exact_oracle(p, k)
        with pytest.raises(InputError):
            greedy_oracle(p, k)


def test_all_subsets_is_lexicographic():
    got = [tuple(r) for r in all_subsets(6, 3)]
    assert got == list(itertools.combinations(range(6), 3))


@pytest.mark.parametrize("seed", range(50))
def test_exact_matches_independent_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 8))
    k = int(rng.integers(1, n + 1))
    p = random_p_grid(rng, n, make_grid(float(rng.choice([0.5, 0.25, 0.1]))))
    values = {s: discrete_reward(s, p) for s in itertools.combinations(range(n), k)}
    best = max(values.values())
    first = next(s for s in itertools.combinations(range(n), k) if values[s] >= best - 1e-15)
    r = exact_oracle(p, k)
    assert r.value == pytest.approx(best, abs=1e-12)
    assert r.value == pytest.approx(discrete_reward(r.subset, p), abs=1e-12)
    assert all(r.value >= v - 1e-12 for v in values.values())
    assert r.subset == first or values[r.subset] == pytest.approx(values[first], abs=1e-14)


@pytest.mark.parametrize("seed", range(20))
def test_greedy_equals_exact_at_k1(seed):
    p = random_p_grid(np.random.default_rng(seed), 6, make_grid(0.1))
    assert greedy_oracle(p, 1).subset == exact_oracle(p, 1).subset


def test_greedy_ratio_on_1000_instances():
    worst = 1.0
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 13))
        k = int(rng.integers(1, min(n, 5) + 1))
        p = random_p_grid(rng, n, make_grid(float(rng.choice([0.5, 0.25, 0.1]))))
        g, e = greedy_oracle(p, k), exact_oracle(p, k)
        assert g.value == pytest.approx(discrete_reward(g.subset, p), abs=1e-12)
        if e.value > 0:
            worst = min(worst, g.value / e.value)
    assert worst >= GREEDY_FACTOR
    assert GREEDY_FACTOR == pytest.approx(1 - 1 / math.e)


def test_oracles_deterministic():
    p = random_p_grid(np.random.default_rng(5), 8, make_grid(0.1))
    assert exact_oracle(p, 3) == exact_oracle(p, 3)
    assert greedy_oracle(p, 3) == greedy_oracle(p, 3)
    assert SubsetTable(8, 3).best(p) == exact_oracle(p, 3)
