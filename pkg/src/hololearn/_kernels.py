"""Hot kernels with a numba path and a pure-numpy path.

Each kernel has a loop implementation (compiled by numba when available) and
a numpy implementation.  The public names at the bottom dispatch on
``_accel.USE_NUMBA``; both variants stay importable for tests and benchmarks.
"""
import numpy as np

from ._accel import USE_NUMBA, njit


def _psi_table_loop(x, nmax):
    # x: (n, d); out[i, k, j] = psi_j(x[i, k])
    n, d = x.shape
    out = np.empty((n, d, nmax + 1))
    for i in range(n):
        for k in range(d):
            t = x[i, k]
            p_prev = 1.0
            out[i, k, 0] = 1.0
            if nmax >= 1:
                p_cur = t
                out[i, k, 1] = np.sqrt(3.0) * t
                for j in range(1, nmax):
                    p_next = ((2 * j + 1) * t * p_cur - j * p_prev) / (j + 1)
                    p_prev = p_cur
                    p_cur = p_next
                    out[i, k, j + 1] = np.sqrt(2.0 * (j + 1) + 1.0) * p_cur
    return out


def _psi_table_numpy(x, nmax):
    x = np.asarray(x, dtype=float)
    n, d = x.shape
    out = np.empty((n, d, nmax + 1))
    out[:, :, 0] = 1.0
    if nmax >= 1:
        p_prev = np.ones_like(x)
        p_cur = x.copy()
        out[:, :, 1] = np.sqrt(3.0) * x
        for j in range(1, nmax):
            p_next = ((2 * j + 1) * x * p_cur - j * p_prev) / (j + 1)
            p_prev, p_cur = p_cur, p_next
            out[:, :, j + 1] = np.sqrt(2.0 * (j + 1) + 1.0) * p_cur
    return out


def _design_loop(table, dims, exps, offsets):
    # column c multiplies table[:, dims[e], exps[e]] for e in offsets[c]:offsets[c+1]
    n = table.shape[0]
    ncol = offsets.shape[0] - 1
    out = np.ones((n, ncol))
    for c in range(ncol):
        for e in range(offsets[c], offsets[c + 1]):
            dk = dims[e]
            ek = exps[e]
            for i in range(n):
                out[i, c] *= table[i, dk, ek]
    return out


def _design_numpy(table, dims, exps, offsets):
    n = table.shape[0]
    ncol = offsets.shape[0] - 1
    out = np.ones((n, ncol))
    for c in range(ncol):
        for e in range(offsets[c], offsets[c + 1]):
            out[:, c] *= table[:, dims[e], exps[e]]
    return out


def _adam_loop(theta, grad, m1, m2, lr, b1, b2, eps, t):
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for i in range(theta.shape[0]):
        g = grad[i]
        m1[i] = b1 * m1[i] + (1.0 - b1) * g
        m2[i] = b2 * m2[i] + (1.0 - b2) * g * g
        theta[i] -= lr * (m1[i] / c1) / (np.sqrt(m2[i] / c2) + eps)


def _adam_numpy(theta, grad, m1, m2, lr, b1, b2, eps, t):
    m1 *= b1
    m1 += (1.0 - b1) * grad
    m2 *= b2
    m2 += (1.0 - b2) * grad * grad
    theta -= lr * (m1 / (1.0 - b1 ** t)) / (np.sqrt(m2 / (1.0 - b2 ** t)) + eps)


psi_table_jit = njit(cache=True)(_psi_table_loop)
design_jit = njit(cache=True)(_design_loop)
adam_jit = njit(cache=True)(_adam_loop)

if USE_NUMBA:
    psi_table = psi_table_jit
    design_product = design_jit
    adam_step = adam_jit
else:
    psi_table = _psi_table_numpy
    design_product = _design_numpy
    adam_step = _adam_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"
