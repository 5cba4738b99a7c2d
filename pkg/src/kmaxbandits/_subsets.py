"""Action-set validation and lexicographic subset enumeration."""
import itertools
import math

import numpy as np

from .errors import CapacityError, InputError

DEFAULT_SUBSET_CAP = 10**6


def check_action(s, n, k=None):
    """Return ``s`` as a tuple of ints after checking it is a valid action.

    Indices must be distinct and in ``range(n)``; when ``k`` is given the
    size must equal ``k``.
    """
    try:
        s = tuple(int(i) for i in s)
    except TypeError as exc:
        raise InputError(f"action must be an iterable of arm indices, got {s!r}") from exc
    if not s:
        raise InputError("action set is empty")
    if k is not None and len(s) != k:
        raise InputError(f"action has {len(s)} arms, expected K={k}")
    if len(set(s)) != len(s):
        raise InputError(f"action {s} repeats an arm")
    bad = [i for i in s if not 0 <= i < n]
    if bad:
        raise InputError(f"arm indices {bad} out of range for N={n}")
    return s


def all_subsets(n, k, cap=DEFAULT_SUBSET_CAP):
    """All size-``k`` subsets of ``range(n)`` as an (S, k) int64 array, lexicographic."""
    if not 1 <= k <= n:
        raise InputError(f"need 1 <= K <= N, got K={k}, N={n}")
    count = math.comb(n, k)
    if count > cap:
        raise CapacityError(
            f"C({n},{k}) = {count} subsets exceeds the enumeration cap {cap}; "
            "use the greedy oracle or raise the cap"
        )
    out = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations(range(n), k)),
        dtype=np.int64,
        count=count * k,
    )
    return out.reshape(count, k)
