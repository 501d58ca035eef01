"""Pure-NumPy kernels. Reference semantics for the numba versions."""

import numpy as np

PHILOX_M0 = np.uint64(0xD2511F53)
PHILOX_M1 = np.uint64(0xCD9E8D57)
PHILOX_W0 = np.uint64(0x9E3779B9)
PHILOX_W1 = np.uint64(0xBB67AE85)
MASK32 = np.uint64(0xFFFFFFFF)
PHILOX_ROUNDS = 10


def philox_blocks(k0, k1, c1, c2, c3, start, n):
    """Philox-4x32-10 output for counters ``(start + i, c1, c2, c3)``.

    Returns a ``uint64`` array of shape ``[n, 4]`` holding 32-bit words.
    """
    x0 = (np.uint64(start) + np.arange(n, dtype=np.uint64)) & MASK32
    x1 = np.full(n, c1, dtype=np.uint64)
    x2 = np.full(n, c2, dtype=np.uint64)
    x3 = np.full(n, c3, dtype=np.uint64)
    key0 = np.uint64(k0)
    key1 = np.uint64(k1)
    for _ in range(PHILOX_ROUNDS):
        p0 = PHILOX_M0 * x0
        p1 = PHILOX_M1 * x2
        x0, x1, x2, x3 = (
            (p1 >> np.uint64(32)) ^ x1 ^ key0,
            p1 & MASK32,
            (p0 >> np.uint64(32)) ^ x3 ^ key1,
            p0 & MASK32,
        )
        key0 = (key0 + PHILOX_W0) & MASK32
        key1 = (key1 + PHILOX_W1) & MASK32
    return np.stack([x0, x1, x2, x3], axis=1)


def autocov_update(prod, ring, head, total, n, y):
    """Folds observation ``y`` (flat, length E) into the lag accumulators in place.

    ``prod[k]`` accumulates ``y_t * y_{t-k}``; ``ring`` holds the last K
    observations (slot ``t mod K``), ``head`` the first K.
    """
    max_lag = ring.shape[0]
    prod[0] += y * y
    m = min(n, max_lag)
    if m:
        idx = (n - np.arange(1, m + 1)) % max_lag
        prod[1:m + 1] += y[None, :] * ring[idx]
    if n < max_lag:
        head[n] = y
    ring[n % max_lag] = y
    total += y


def geyer_tau(rho):
    """Integrated autocorrelation time by Geyer's initial positive sequence.

    ``rho`` has shape ``[K + 1, E]`` with ``rho[0] == 1``. Sums lag pairs
    ``rho[2m] + rho[2m + 1]`` while they stay positive.
    """
    num_pairs = rho.shape[0] // 2
    pairs = rho[0:2 * num_pairs:2] + rho[1:2 * num_pairs:2]
    keep = np.cumprod(pairs > 0, axis=0).astype(bool)
    return -1.0 + 2.0 * np.sum(np.where(keep, pairs, 0.0), axis=0)
