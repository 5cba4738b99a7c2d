"""Standard problem instances and random instance generators."""
import numpy as np

from .discretize import ProbGrid
from .env_continuous import builtin_arm

# Upper-half densities of two-piece mixed-uniform arms: density h on [0.5, 1]
# and 2 - h on [0, 0.5]. h in [0.5, 1.5] keeps the bi-Lipschitz constant at 2.
KMAX_UPPER_DENSITIES = (1.5, 1.5, 0.5, 0.5, 0.5, 0.5)


def two_piece_arm(h):
    """Arm spec (config form) with density 2 - h on [0, 1/2] and h on [1/2, 1]."""
    return {"kind": "uniform_mixture", "weights": [1 - h / 2, h / 2],
            "intervals": [[0.0, 0.5], [0.5, 1.0]]}


def kmax_standard_arms(densities=KMAX_UPPER_DENSITIES):
    return [two_piece_arm(h) for h in densities]


KMIN_STANDARD_MODEL = {
    "theta_star": [1.0, 0.6, 0.3],
    "v_bound": 1.5,
    "features": [
        [0.9, 0.1, 0.1], [0.1, 0.9, 0.1], [0.1, 0.1, 0.9], [0.6, 0.6, 0.2],
        [0.5, 0.2, 0.6], [0.2, 0.5, 0.5], [0.7, 0.3, 0.3], [0.3, 0.3, 0.3],
    ],
}


def random_arm_spec(rng):
    """A random bi-Lipschitz builtin arm in config form."""
    kind = rng.choice(["truncated_gaussian", "uniform_mixture", "uniform_mixture", "beta"])
    if kind == "truncated_gaussian":
        return {"kind": kind, "mu": float(rng.uniform(0, 1)), "sigma": float(rng.uniform(0.15, 1.0))}
    if kind == "beta":
        return {"kind": kind, "a": 1.0, "b": 1.0}
    n_extra = int(rng.integers(1, 4))
    lo = rng.uniform(0, 0.9, n_extra)
    hi = np.minimum(lo + rng.uniform(0.05, 0.6, n_extra), 1.0)
    w = rng.dirichlet(np.ones(n_extra + 1))
    w[0] = max(w[0], 0.05)  # the [0, 1] floor keeps the density positive
    w /= w.sum()
    intervals = [[0.0, 1.0]] + [[float(a), float(b)] for a, b in zip(lo, hi)]
    return {"kind": kind, "weights": w.tolist(), "intervals": intervals}


def random_arm(rng, label=0):
    spec = random_arm_spec(rng)
    return builtin_arm(spec.pop("kind"), label=label, **spec)


def random_p_grid(rng, n, grid, sparsity=0.2):
    """Random P-grid; some entries are zeroed to exercise the edge conventions."""
    p = rng.dirichlet(np.ones(grid.m), size=n)
    p[rng.random(p.shape) < sparsity] = 0.0
    empty = p.sum(axis=1) == 0
    p[empty, rng.integers(0, grid.m, empty.sum())] = 1.0
    p /= p.sum(axis=1, keepdims=True)
    return ProbGrid("P", p, grid)
