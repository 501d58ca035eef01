"""Independent reference computations shared by the tests."""

import numpy as np

from chainkit.potential import finite_diff_grad


def grad_rel_error(potential_fn, x, h=1e-5):
    """Worst per-chain ``|g - fd| / |fd|`` against central differences."""
    _, grad, _ = potential_fn(x)
    fd = finite_diff_grad(potential_fn, x, h=h)
    g = np.asarray(grad).reshape(len(x), -1)
    fd = np.asarray(fd).reshape(len(x), -1)
    err = np.linalg.norm(g - fd, axis=1) / np.linalg.norm(fd, axis=1)
    return float(np.max(err))


def batch_covariance(x, ddof=0):
    """Two-pass covariance over the leading axis, on the last axis."""
    d = x - x.mean(axis=0)
    return np.einsum('b...i,b...j->...ij', d, d) / (x.shape[0] - ddof)


def ar1(key_normal, n, phi, num_series=1):
    """AR(1) series with unit innovations, started from stationarity."""
    eps = key_normal((n, num_series))
    out = np.empty((n, num_series))
    out[0] = eps[0] / np.sqrt(1.0 - phi * phi)
    for t in range(1, n):
        out[t] = phi * out[t - 1] + eps[t]
    return out


def batch_autocovariance(x, max_lag):
    """Lag-k auto-covariance with 1/(n-k) normalization around the full mean."""
    n = x.shape[0]
    d = x - x.mean(axis=0)
    return np.stack([np.sum(d[:n - k] * d[k:], axis=0) / (n - k)
                     for k in range(max_lag + 1)])


def ess_oracle(x, max_lag):
    """Geyer initial-positive-sequence ESS computed directly from the draws."""
    acov = batch_autocovariance(x, max_lag)
    rho = acov / acov[0]
    n = x.shape[0]
    flat = rho.reshape(rho.shape[0], -1)
    out = []
    for col in flat.T:
        total = 0.0
        for m in range(len(col) // 2):
            pair = col[2 * m] + col[2 * m + 1]
            if pair <= 0:
                break
            total += pair
        tau = max(-1.0 + 2.0 * total, 1.0 / np.log10(n))
        out.append(n / tau)
    return np.array(out).reshape(rho.shape[1:])


def standard_error(x, ess):
    return np.std(x, axis=0) / np.sqrt(ess)
