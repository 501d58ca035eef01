"""A small zoo of smooth potentials with closed-form gradients.

Each factory returns a potential over a single ``[C, D]`` array (or any
``[C, ...]`` array for the isotropic normal) with an empty extra.
"""

import numpy as np

from chainkit.errors import ShapeError

__all__ = [
    'banana',
    'diagonal_normal',
    'multivariate_normal',
    'standard_normal',
]

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def _event_axes(x):
    return tuple(range(1, x.ndim))


def standard_normal():
    """Isotropic standard normal over every non-chain axis."""

    def potential_fn(x):
        x = np.asarray(x, dtype=np.float64)
        log_prob = -0.5 * np.sum(x * x, axis=_event_axes(x)) - (
            _HALF_LOG_2PI * (x.size // x.shape[0]))
        return log_prob, -x, ()

    return potential_fn


def diagonal_normal(loc, scale):
    """Independent normals with per-coordinate ``loc`` and ``scale``."""
    loc = np.asarray(loc, dtype=np.float64)
    scale = np.asarray(scale, dtype=np.float64)
    if np.any(scale <= 0):
        raise ValueError('scale must be positive')
    log_norm = np.sum(np.log(scale)) + _HALF_LOG_2PI * scale.size

    def potential_fn(x):
        x = np.asarray(x, dtype=np.float64)
        z = (x - loc) / scale
        return (-0.5 * np.sum(z * z, axis=_event_axes(x)) - log_norm,
                -z / scale, ())

    return potential_fn


def multivariate_normal(loc, covariance):
    """Correlated normal over ``[C, D]`` states."""
    loc = np.asarray(loc, dtype=np.float64)
    covariance = np.asarray(covariance, dtype=np.float64)
    precision = np.linalg.inv(covariance)
    sign, logdet = np.linalg.slogdet(covariance)
    if sign <= 0:
        raise ValueError('covariance must be positive definite')
    log_norm = 0.5 * logdet + _HALF_LOG_2PI * loc.shape[-1]

    def potential_fn(x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != loc.shape[-1]:
            raise ShapeError(f'expected [C, {loc.shape[-1]}], got {x.shape}')
        d = x - loc
        pd = d @ precision
        return -0.5 * np.sum(d * pd, axis=1) - log_norm, -pd, ()

    return potential_fn


def banana(curvature=0.1, scale=1.0):
    """Twisted 2-D normal: ``x0 ~ N(0, scale^2)``, ``x1 | x0 ~ N(b x0^2, 1)``."""

    def potential_fn(x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != 2:
            raise ShapeError(f'expected [C, 2], got {x.shape}')
        x0, x1 = x[:, 0], x[:, 1]
        r = x1 - curvature * x0 * x0
        log_prob = -0.5 * (x0 / scale)**2 - 0.5 * r * r
        grad = np.stack([-x0 / scale**2 + 2.0 * curvature * x0 * r, -r],
                        axis=1)
        return log_prob, grad, ()

    return potential_fn
