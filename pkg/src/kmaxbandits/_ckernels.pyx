# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_kernels_py``; same signatures and results."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, INFINITY

cnp.import_array()


def subset_rewards(double[:, ::1] cum, cnp.int64_t[:, ::1] subsets, double[::1] values):
    cdef Py_ssize_t n_sub = subsets.shape[0]
    cdef Py_ssize_t k = subsets.shape[1]
    cdef Py_ssize_t m = values.shape[0]
    cdef Py_ssize_t s, a, j
    cdef double g, g_prev, acc
    out = np.empty(n_sub, dtype=np.float64)
    cdef double[::1] out_v = out
    for s in range(n_sub):
        g_prev = 0.0
        acc = 0.0
        for j in range(m):
            g = 1.0
            for a in range(k):
                g *= cum[subsets[s, a], j]
            acc += values[j] * (g - g_prev)
            g_prev = g
        out_v[s] = acc
    return out


def q_to_p(double[:, ::1] q):
    cdef Py_ssize_t n = q.shape[0]
    cdef Py_ssize_t m = q.shape[1]
    cdef Py_ssize_t i, j
    cdef double tail, total
    p = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] pv = p
    for i in range(n):
        tail = 1.0
        total = 0.0
        for j in range(m - 1, -1, -1):
            pv[i, j] = q[i, j] * tail
            total += pv[i, j]
            tail *= 1.0 - q[i, j]
        pv[i, 0] += 1.0 - total
    return p


def exp_nll_terms(double[::1] theta, double[:, ::1] psi, double[::1] counts,
                  double[::1] loss_psi, double lam):
    cdef Py_ssize_t n_u = psi.shape[0]
    cdef Py_ssize_t d = psi.shape[1]
    cdef Py_ssize_t u, a, b
    cdef double rate, w, w2, value = 0.0
    grad = np.empty(d, dtype=np.float64)
    hess = np.zeros((d, d), dtype=np.float64)
    cdef double[::1] gv = grad
    cdef double[:, ::1] hv = hess
    for a in range(d):
        gv[a] = loss_psi[a] + lam * theta[a]
        value += loss_psi[a] * theta[a] + 0.5 * lam * theta[a] * theta[a]
        hv[a, a] = lam
    for u in range(n_u):
        rate = 0.0
        for a in range(d):
            rate += psi[u, a] * theta[a]
        if rate <= 0.0:
            return INFINITY, None, None
        value -= counts[u] * log(rate)
        w = counts[u] / rate
        w2 = w / rate
        for a in range(d):
            gv[a] -= w * psi[u, a]
            for b in range(d):
                hv[a, b] += w2 * psi[u, a] * psi[u, b]
    return value, grad, hess
