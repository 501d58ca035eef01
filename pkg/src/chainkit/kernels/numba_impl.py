"""numba-compiled kernels; bit-for-bit twins of :mod:`numpy_impl`."""

import numpy as np
from numba import njit

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT = np.uint64(32)


@njit(cache=True)
def philox_blocks(k0, k1, c1, c2, c3, start, n):
    out = np.empty((n, 4), dtype=np.uint64)
    base = np.uint64(start)
    for i in range(n):
        x0 = (base + np.uint64(i)) & _MASK32
        x1 = np.uint64(c1)
        x2 = np.uint64(c2)
        x3 = np.uint64(c3)
        key0 = np.uint64(k0)
        key1 = np.uint64(k1)
        for _ in range(10):
            p0 = _M0 * x0
            p1 = _M1 * x2
            y0 = (p1 >> _SHIFT) ^ x1 ^ key0
            y2 = (p0 >> _SHIFT) ^ x3 ^ key1
            x1 = p1 & _MASK32
            x3 = p0 & _MASK32
            x0 = y0
            x2 = y2
            key0 = (key0 + _W0) & _MASK32
            key1 = (key1 + _W1) & _MASK32
        out[i, 0] = x0
        out[i, 1] = x1
        out[i, 2] = x2
        out[i, 3] = x3
    return out


@njit(cache=True)
def autocov_update(prod, ring, head, total, n, y):
    max_lag = ring.shape[0]
    num = y.shape[0]
    m = min(n, max_lag)
    for e in range(num):
        ye = y[e]
        prod[0, e] += ye * ye
        for k in range(1, m + 1):
            prod[k, e] += ye * ring[(n - k) % max_lag, e]
        if n < max_lag:
            head[n, e] = ye
        ring[n % max_lag, e] = ye
        total[e] += ye


@njit(cache=True)
def geyer_tau(rho):
    num_pairs = rho.shape[0] // 2
    num = rho.shape[1]
    out = np.empty(num)
    for e in range(num):
        acc = 0.0
        for m in range(num_pairs):
            pair = rho[2 * m, e] + rho[2 * m + 1, e]
            if not pair > 0:
                break
            acc += pair
        out[e] = -1.0 + 2.0 * acc
    return out
