"""Compiled distance loops.

Every entry is produced by the same scalar routine with a fixed coordinate
order, so a Gram matrix entry is bit-identical to the corresponding single
pair evaluation and to the same pair inside an index-pair batch.
"""

import numpy as np
from numba import njit

SQEUCLIDEAN = 0
L1 = 1
L2 = 2
LR = 3
UNEQUAL = 4


@njit(cache=True, inline="always")
def _dist(A, i, B, j, d, kind, r):
    acc = 0.0
    if kind == SQEUCLIDEAN:
        for c in range(d):
            t = A[i, c] - B[j, c]
            acc += t * t
        return acc
    if kind == L1:
        for c in range(d):
            acc += abs(A[i, c] - B[j, c])
        return acc
    if kind == L2:
        for c in range(d):
            t = A[i, c] - B[j, c]
            acc += t * t
        return np.sqrt(acc)
    if kind == LR:
        for c in range(d):
            acc += abs(A[i, c] - B[j, c]) ** r
        return acc ** (1.0 / r)
    for c in range(d):
        if A[i, c] != B[j, c]:
            return 1.0
    return 0.0


@njit(cache=True)
def cross_distance(A, B, kind, r):
    n, d = A.shape
    m = B.shape[0]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            out[i, j] = _dist(A, i, B, j, d, kind, r)
    return out


@njit(cache=True)
def pair_distance(A, B, I, J, kind, r):
    d = A.shape[1]
    out = np.empty(I.shape[0])
    for t in range(I.shape[0]):
        out[t] = _dist(A, I[t], B, J[t], d, kind, r)
    return out


@njit(cache=True, inline="always")
def _stein_terms(X, i, SX, Y, j, SY, d):
    sq = 0.0
    ss = 0.0
    cr = 0.0
    for c in range(d):
        t = X[i, c] - Y[j, c]
        sq += t * t
        ss += SX[i, c] * SY[j, c]
        cr += t * (SY[j, c] - SX[i, c])
    return sq, ss, cr


@njit(cache=True)
def stein_cross_terms(X, SX, Y, SY):
    """Squared distance, score inner product and (x - y).(s_y - s_x) for all pairs."""
    n, d = X.shape
    m = Y.shape[0]
    sq = np.empty((n, m))
    ss = np.empty((n, m))
    cr = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            a, b, c = _stein_terms(X, i, SX, Y, j, SY, d)
            sq[i, j] = a
            ss[i, j] = b
            cr[i, j] = c
    return sq, ss, cr


@njit(cache=True)
def stein_pair_terms(X, SX, I, J):
    d = X.shape[1]
    k = I.shape[0]
    sq = np.empty(k)
    ss = np.empty(k)
    cr = np.empty(k)
    for t in range(k):
        a, b, c = _stein_terms(X, I[t], SX, X, J[t], SX, d)
        sq[t] = a
        ss[t] = b
        cr[t] = c
    return sq, ss, cr
