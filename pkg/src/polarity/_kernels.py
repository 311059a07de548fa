"""Compiled brute-force sup scans used by the grid transforms.

Every scan walks the source nodes in index order and only replaces the
running best on a strict improvement, so ties resolve to the smallest
flat (lexicographic) index. The two-dimensional case is unrolled since it
dominates the runtime of the desk-scale checks.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _dots(X, y):
    M, n = X.shape
    out = np.zeros(M)
    for d in range(n):
        yd = y[d]
        for m in range(M):
            out[m] += X[m, d] * yd
    return out


@njit(cache=True)
def polar_scan(X, inv_f, Y):
    """max_m (<X[m], Y[k]> - 1) * inv_f[m] for every row of Y."""
    K, n = Y.shape
    M = X.shape[0]
    out = np.empty(K)
    arg = np.empty(K, dtype=np.int64)
    if n == 2:
        x0 = X[:, 0].copy()
        x1 = X[:, 1].copy()
        for k in range(K):
            y0 = Y[k, 0]
            y1 = Y[k, 1]
            best = -np.inf
            bi = -1
            for m in range(M):
                v = (x0[m] * y0 + x1[m] * y1 - 1.0) * inv_f[m]
                if v > best:
                    best = v
                    bi = m
            out[k] = best
            arg[k] = bi
        return out, arg
    for k in range(K):
        s = _dots(X, Y[k])
        best = -np.inf
        bi = -1
        for m in range(M):
            v = (s[m] - 1.0) * inv_f[m]
            if v > best:
                best = v
                bi = m
        out[k] = best
        arg[k] = bi
    return out, arg


@njit(cache=True)
def legendre_scan(X, f, Y):
    """max_m <X[m], Y[k]> - f[m] for every row of Y."""
    K, n = Y.shape
    M = X.shape[0]
    out = np.empty(K)
    arg = np.empty(K, dtype=np.int64)
    if n == 2:
        x0 = X[:, 0].copy()
        x1 = X[:, 1].copy()
        for k in range(K):
            y0 = Y[k, 0]
            y1 = Y[k, 1]
            best = -np.inf
            bi = -1
            for m in range(M):
                v = x0[m] * y0 + x1[m] * y1 - f[m]
                if v > best:
                    best = v
                    bi = m
            out[k] = best
            arg[k] = bi
        return out, arg
    for k in range(K):
        s = _dots(X, Y[k])
        best = -np.inf
        bi = -1
        for m in range(M):
            v = s[m] - f[m]
            if v > best:
                best = v
                bi = m
        out[k] = best
        arg[k] = bi
    return out, arg


@njit(cache=True)
def support_scan(X, Y):
    """Support function of the point cloud X evaluated at the rows of Y."""
    K = Y.shape[0]
    out = np.empty(K)
    for k in range(K):
        s = _dots(X, Y[k])
        best = -np.inf
        for m in range(X.shape[0]):
            if s[m] > best:
                best = s[m]
        out[k] = best
    return out
