"""Hot-loop kernels, compiled when available.

The Cython extension ``_ckernels`` is used if it was built; otherwise the
numpy versions in ``_kernels_py`` are used. Set ``KMAXBANDITS_PURE_PYTHON=1``
before import to force the fallback. ``BACKEND`` names the active one.
"""
import os

import numpy as np

from . import _kernels_py

_ext = None
if os.environ.get("KMAXBANDITS_PURE_PYTHON") != "1":
    try:
        from . import _ckernels as _ext
    except ImportError:
        _ext = None

BACKEND = "cython" if _ext is not None else "python"
_impl = _ext if _ext is not None else _kernels_py


def subset_rewards(cum, subsets, values):
    return _impl.subset_rewards(
        np.ascontiguousarray(cum, dtype=np.float64),
        np.ascontiguousarray(subsets, dtype=np.int64),
        np.ascontiguousarray(values, dtype=np.float64),
    )


def q_to_p(q):
    return _impl.q_to_p(np.ascontiguousarray(q, dtype=np.float64))


def exp_nll_terms(theta, psi, counts, loss_psi, lam):
    return _impl.exp_nll_terms(
        np.ascontiguousarray(theta, dtype=np.float64),
        np.ascontiguousarray(psi, dtype=np.float64),
        np.ascontiguousarray(counts, dtype=np.float64),
        np.ascontiguousarray(loss_psi, dtype=np.float64),
        float(lam),
    )
