"""Products whose row ``i`` depends on input row ``i`` only.

BLAS kernels may block a matrix product differently depending on how many rows
it has, which changes rounding.  Prediction goes through these loops instead so
a batch of rows gives bit-identical results to the rows one at a time.  Each
output accumulates over ``k`` in order, without fused multiply-add.
"""

from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True)
def _matmul(a, w, out):
    n, K = a.shape
    m = w.shape[1]
    for i in range(n):
        for k in range(K):
            aik = a[i, k]
            for j in range(m):
                out[i, j] += aik * w[k, j]


def rowwise_matmul(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    out = np.zeros((a.shape[0], w.shape[1]))
    _matmul(a, w, out)
    return out


def rowwise_dot(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    return rowwise_matmul(a, np.asarray(w, dtype=float).reshape(-1, 1))[:, 0]
