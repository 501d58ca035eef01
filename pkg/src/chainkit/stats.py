"""Streaming statistics over trees of arrays.

All accumulators are immutable values: every ``*_step`` returns a fresh state
and an empty extra (or a small extra with derived values), so they drop into
transition kernels like any other piece of chain state.

Shapes passed to the ``*_init`` functions are trees whose leaves are shape
tuples; ``((3,), (5, 2))`` describes two arrays. The empty tuple is a scalar.
"""

from __future__ import annotations

import math
from typing import Any, NamedTuple

import numpy as np

from chainkit import kernels
from chainkit import tree as tree_lib
from chainkit.errors import (DegenerateStatistic, InsufficientChains,
                             InsufficientSamples, ShapeError)

__all__ = [
    'AutoCovarianceState',
    'EwmaExtra',
    'EwmaState',
    'PotentialScaleReductionState',
    'RunningCovarianceState',
    'RunningMeanState',
    'RunningVarianceState',
    'auto_covariance_extract',
    'auto_covariance_init',
    'auto_covariance_step',
    'effective_sample_size',
    'ewma_init',
    'ewma_step',
    'potential_scale_reduction_extract',
    'potential_scale_reduction_init',
    'potential_scale_reduction_step',
    'running_covariance_extract',
    'running_covariance_init',
    'running_covariance_merge',
    'running_covariance_step',
    'running_mean_init',
    'running_mean_merge',
    'running_mean_step',
    'running_variance_extract',
    'running_variance_init',
    'running_variance_merge',
    'running_variance_step',
]


def _is_shape(x) -> bool:
    return isinstance(x, (tuple, list)) and not hasattr(type(x), '_fields') \
        and all(isinstance(d, (int, np.integer)) for d in x)


def _map_shapes(f, shapes):
    """Applies ``f`` to every shape tuple in a tree of shapes."""
    if _is_shape(shapes):
        return f(tuple(int(d) for d in shapes))
    if isinstance(shapes, dict):
        return {k: _map_shapes(f, v) for k, v in shapes.items()}
    if hasattr(type(shapes), '_fields'):
        return type(shapes)(*[_map_shapes(f, v) for v in shapes])
    if isinstance(shapes, (tuple, list)):
        return type(shapes)(_map_shapes(f, v) for v in shapes)
    raise TypeError(f'not a shape tree: {shapes!r}')


def _zeros(shapes, dtype=np.float64):
    return _map_shapes(lambda s: np.zeros(s, dtype=dtype), shapes)


def _as_batch(x, event_shape, axis):
    """Reshapes ``x`` to ``[batch] + event_shape``, aggregating over ``axis``."""
    x = np.asarray(x, dtype=np.float64)
    if axis is None:
        if x.shape != event_shape:
            raise ShapeError(f'expected shape {event_shape}, got {x.shape}')
        return x[np.newaxis]
    axes = (axis,) if isinstance(axis, (int, np.integer)) else tuple(axis)
    if any(not -x.ndim <= a < x.ndim for a in axes):
        raise ShapeError(f'axis {axis} out of range for shape {x.shape}')
    axes = tuple(sorted(a % x.ndim for a in axes))
    if len(set(axes)) != len(axes):
        raise ShapeError(f'repeated axes in {axis}')
    moved = np.moveaxis(x, axes, tuple(range(len(axes))))
    kept = moved.shape[len(axes):]
    if kept != event_shape:
        raise ShapeError(
            f'aggregating {x.shape} over {axes} gives {kept}, expected '
            f'{event_shape}')
    return moved.reshape((-1,) + kept)


def _batch_count(batches) -> int:
    counts = {b.shape[0] for b in tree_lib.tree_leaves(batches)}
    if len(counts) > 1:
        raise ShapeError(f'leaves contribute different point counts: {counts}')
    return counts.pop() if counts else 0


def _outer_last(a, b):
    return a[..., :, None] * b[..., None, :]


def _comoment(d):
    """Sum over the batch axis of outer products on the last event axis."""
    if d.ndim == 1:
        return np.sum(d * d, axis=0)
    return np.einsum('b...i,b...j->...ij', d, d)


class RunningMeanState(NamedTuple):
    num_points: int
    mean: Any


def running_mean_init(shape, dtype=np.float64) -> RunningMeanState:
    return RunningMeanState(0, _zeros(shape, dtype))


def running_mean_step(state: RunningMeanState, vec, axis=None):
    """Folds ``vec`` into the mean. ``axis`` marks axes whose slices are points."""
    batches = tree_lib.tree_map(
        lambda x, m: _as_batch(x, m.shape, axis), vec, state.mean)
    nb = _batch_count(batches)
    batch = RunningMeanState(
        nb, tree_lib.tree_map(lambda b: np.mean(b, axis=0), batches))
    return running_mean_merge(state, batch), ()


def running_mean_merge(a: RunningMeanState, b: RunningMeanState):
    n = a.num_points + b.num_points
    if n == 0:
        return a
    w = b.num_points / n
    return RunningMeanState(
        n, tree_lib.tree_map(lambda ma, mb: ma + (mb - ma) * w, a.mean, b.mean))


class RunningVarianceState(NamedTuple):
    """Mean and summed squared deviations (``m2``) per element."""

    num_points: int
    mean: Any
    m2: Any

    @property
    def variance(self):
        return running_variance_extract(self)


def running_variance_init(shape, dtype=np.float64) -> RunningVarianceState:
    return RunningVarianceState(0, _zeros(shape, dtype), _zeros(shape, dtype))


def running_variance_step(state: RunningVarianceState, vec, axis=None):
    """Welford/Chan update of per-element mean and variance."""
    batches = tree_lib.tree_map(
        lambda x, m: _as_batch(x, m.shape, axis), vec, state.mean)
    nb = _batch_count(batches)
    means = tree_lib.tree_map(lambda b: np.mean(b, axis=0), batches)
    m2s = tree_lib.tree_map(lambda b, m: np.sum(np.square(b - m), axis=0),
                            batches, means)
    return running_variance_merge(state,
                                  RunningVarianceState(nb, means, m2s)), ()


def running_variance_merge(a: RunningVarianceState, b: RunningVarianceState):
    """Pairwise merge of two accumulators over disjoint data."""
    n = a.num_points + b.num_points
    if n == 0:
        return a
    wa = a.num_points * b.num_points / n
    wb = b.num_points / n

    def merge(ma, mb, sa, sb):
        delta = mb - ma
        return ma + delta * wb, sa + sb + np.square(delta) * wa

    merged = tree_lib.tree_map(merge, a.mean, b.mean, a.m2, b.m2)
    mean = tree_lib.tree_map_up_to(a.mean, lambda p: p[0], merged)
    m2 = tree_lib.tree_map_up_to(a.mean, lambda p: p[1], merged)
    return RunningVarianceState(n, mean, m2)


def running_variance_extract(state: RunningVarianceState, ddof: int = 0):
    """Variance with ``num_points - ddof`` in the denominator."""
    denom = state.num_points - ddof
    if denom <= 0:
        raise InsufficientSamples(
            f'need more than {ddof} points, have {state.num_points}')
    return tree_lib.tree_map(lambda s: s / denom, state.m2)


class RunningCovarianceState(NamedTuple):
    """Mean and summed outer-product deviations over each leaf's last axis.

    For a leaf of shape ``S + [D]`` the comoment has shape ``S + [D, D]``; a
    scalar leaf tracks a plain variance.
    """

    num_points: int
    mean: Any
    comoment: Any

    @property
    def covariance(self):
        return running_covariance_extract(self)


def _cov_shape(s):
    return s + s[-1:] if s else ()


def running_covariance_init(shape, dtype=np.float64) -> RunningCovarianceState:
    return RunningCovarianceState(
        0, _zeros(shape, dtype), _map_shapes(
            lambda s: np.zeros(_cov_shape(s), dtype=dtype), shape))


def running_covariance_step(state: RunningCovarianceState, vec, axis=None):
    """Chan update of mean and covariance.

    Args:
      state: ``RunningCovarianceState``.
      vec: Tree of arrays matching ``state.mean``, plus any aggregated axes.
      axis: Axis or axes of ``vec`` whose slices are separate points, e.g.
        ``0`` to pool across chains. ``None`` means ``vec`` is one point.

    Returns:
      ``(new_state, ())``.
    """
    batches = tree_lib.tree_map(
        lambda x, m: _as_batch(x, m.shape, axis), vec, state.mean)
    nb = _batch_count(batches)
    means = tree_lib.tree_map(lambda b: np.mean(b, axis=0), batches)
    comoments = tree_lib.tree_map(lambda b, m: _comoment(b - m), batches, means)
    return running_covariance_merge(
        state, RunningCovarianceState(nb, means, comoments)), ()


def running_covariance_merge(a: RunningCovarianceState,
                             b: RunningCovarianceState):
    """Pairwise merge of two accumulators over disjoint data."""
    n = a.num_points + b.num_points
    if n == 0:
        return a
    wa = a.num_points * b.num_points / n
    wb = b.num_points / n

    def merge(ma, mb, ca, cb):
        delta = mb - ma
        outer = delta * delta if delta.ndim == 0 else _outer_last(delta, delta)
        return ma + delta * wb, ca + cb + outer * wa

    merged = tree_lib.tree_map(merge, a.mean, b.mean, a.comoment, b.comoment)
    mean = tree_lib.tree_map_up_to(a.mean, lambda p: p[0], merged)
    comoment = tree_lib.tree_map_up_to(a.mean, lambda p: p[1], merged)
    return RunningCovarianceState(n, mean, comoment)


def running_covariance_extract(state: RunningCovarianceState, ddof: int = 0):
    """Covariance with ``num_points - ddof`` in the denominator."""
    denom = state.num_points - ddof
    if denom <= 0:
        raise InsufficientSamples(
            f'need more than {ddof} points, have {state.num_points}')
    return tree_lib.tree_map(lambda c: c / denom, state.comoment)


class EwmaState(NamedTuple):
    """Exponentially weighted moving mean and variance.

    ``value`` is the raw recurrence ``decay * value + (1 - decay) * x`` started
    from zero. ``m2`` is the decayed sum of squared deviations.
    """

    decay: float
    num_points: int
    value: Any
    m2: Any


class EwmaExtra(NamedTuple):
    mean: Any
    variance: Any
    debias: float


def ewma_init(shape, decay: float, dtype=np.float64) -> EwmaState:
    if not 0.0 < decay < 1.0:
        raise ValueError(f'decay must lie in (0, 1), got {decay}')
    return EwmaState(decay, 0, _zeros(shape, dtype), _zeros(shape, dtype))


def ewma_step(state: EwmaState, vec):
    """Folds one observation into the moving averages.

    Returns:
      ``(new_state, EwmaExtra)``. ``extra.debias`` is ``1 - decay**n``;
      ``extra.mean`` is ``value / debias``, the weighted mean with weights
      ``decay**(n - i)``, and ``extra.variance`` the matching weighted
      population variance.
    """
    d = state.decay
    n = state.num_points + 1
    prev_debias = 1.0 - d**state.num_points
    debias = 1.0 - d**n

    def update(value, m2, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != value.shape:
            raise ShapeError(f'expected shape {value.shape}, got {x.shape}')
        prev_mean = value / prev_debias if state.num_points else x
        new_value = d * value + (1.0 - d) * x
        mean = new_value / debias
        return new_value, d * m2 + (x - prev_mean) * (x - mean)

    pairs = tree_lib.tree_map(update, state.value, state.m2, vec)
    value = tree_lib.tree_map_up_to(state.value, lambda p: p[0], pairs)
    m2 = tree_lib.tree_map_up_to(state.value, lambda p: p[1], pairs)
    new_state = EwmaState(d, n, value, m2)
    return new_state, EwmaExtra(
        mean=tree_lib.tree_map(lambda v: v / debias, value),
        variance=tree_lib.tree_map(lambda s: s * (1.0 - d) / debias, m2),
        debias=debias)


class PotentialScaleReductionState(NamedTuple):
    """Per-chain running mean and ``m2``; leaves keep the leading chain axis."""

    num_points: int
    mean: Any
    m2: Any


def potential_scale_reduction_init(shape, dtype=np.float64):
    """``shape`` includes the leading chain axis, which must be at least 2."""

    def check(s):
        if not s or s[0] < 2:
            raise InsufficientChains(
                f'potential scale reduction needs >= 2 chains, shape {s}')
        return np.zeros(s, dtype=dtype)

    return PotentialScaleReductionState(
        0, _map_shapes(check, shape), _zeros(shape, dtype))


def potential_scale_reduction_step(state: PotentialScaleReductionState, vec):
    """Adds one draw per chain."""
    n = state.num_points + 1

    def update(mean, m2, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != mean.shape:
            raise ShapeError(f'expected shape {mean.shape}, got {x.shape}')
        delta = x - mean
        new_mean = mean + delta / n
        return new_mean, m2 + delta * (x - new_mean)

    pairs = tree_lib.tree_map(update, state.mean, state.m2, vec)
    mean = tree_lib.tree_map_up_to(state.mean, lambda p: p[0], pairs)
    m2 = tree_lib.tree_map_up_to(state.mean, lambda p: p[1], pairs)
    return PotentialScaleReductionState(n, mean, m2), ()


def potential_scale_reduction_extract(state: PotentialScaleReductionState):
    """Gelman-Rubin ``R-hat`` per element, from ``n`` draws in each chain.

    ``W`` is the average within-chain sample variance, ``B / n`` the sample
    variance of the chain means, and
    ``R-hat = sqrt((n - 1) / n + (B / n) / W)``. If ``B`` is zero the ratio
    term is zero; otherwise ``W == 0`` gives ``inf``.
    """
    n = state.num_points
    if n < 2:
        raise InsufficientSamples(f'R-hat needs >= 2 draws per chain, have {n}')

    def rhat(mean, m2):
        within = np.mean(m2 / (n - 1), axis=0)
        between_over_n = np.var(mean, axis=0, ddof=1)
        with np.errstate(divide='ignore', invalid='ignore'):
            ratio = np.where(between_over_n == 0, 0.0,
                             between_over_n / within)
        return np.sqrt((n - 1) / n + ratio)

    return tree_lib.tree_map(rhat, state.mean, state.m2)


class AutoCovarianceState(NamedTuple):
    """Lag-product accumulators for an auto-covariance up to ``max_lag``.

    Observations are stored shifted by the first one (``shift``) for
    numerical stability. ``head`` keeps the first ``max_lag`` shifted
    observations, ``ring`` the most recent ``max_lag`` (slot ``t % max_lag``),
    ``total`` their running sum and ``prod[k]`` the sum of lag-``k`` products.
    """

    max_lag: int
    num_points: int
    shift: Any
    head: Any
    ring: Any
    total: Any
    prod: Any


def auto_covariance_init(shape, max_lag: int, dtype=np.float64):
    if max_lag < 1:
        raise ValueError(f'max_lag must be >= 1, got {max_lag}')
    lagged = lambda k: _map_shapes(lambda s: np.zeros((k,) + s, dtype), shape)
    return AutoCovarianceState(
        max_lag=max_lag, num_points=0, shift=_zeros(shape, dtype),
        head=lagged(max_lag), ring=lagged(max_lag), total=_zeros(shape, dtype),
        prod=lagged(max_lag + 1))


def auto_covariance_step(state: AutoCovarianceState, vec):
    """Adds one observation (a tree shaped like the init shapes)."""
    n = state.num_points
    k = state.max_lag

    def update(shift, head, ring, total, prod, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != shift.shape:
            raise ShapeError(f'expected shape {shift.shape}, got {x.shape}')
        shift = x.copy() if n == 0 else shift
        head, ring, total, prod = (np.array(a) for a in (head, ring, total,
                                                         prod))
        y = (x - shift).reshape(-1)
        kernels.autocov_update(prod.reshape(k + 1, -1), ring.reshape(k, -1),
                               head.reshape(k, -1), total.reshape(-1), n, y)
        return shift, head, ring, total, prod

    parts = tree_lib.tree_map(update, state.shift, state.head, state.ring,
                              state.total, state.prod, vec)
    field = lambda i: tree_lib.tree_map_up_to(state.shift, lambda p: p[i],
                                              parts)
    return AutoCovarianceState(k, n + 1, field(0), field(1), field(2),
                               field(3), field(4)), ()


def auto_covariance_extract(state: AutoCovarianceState):
    """Auto-covariance at lags ``0..max_lag``, shape ``[max_lag + 1] + S``.

    Lag ``k`` averages the ``n - k`` products
    ``(x_t - mean) * (x_{t+k} - mean)`` around the final mean.
    """
    n = state.num_points
    k = state.max_lag
    if n <= k:
        raise InsufficientSamples(
            f'need more than max_lag={k} observations, have {n}')
    lags = np.arange(k + 1)
    pairs = (n - lags).astype(np.float64)
    newest_first = (n - 1 - np.arange(k)) % k

    def extract(head, ring, total, prod):
        expand = lambda a: a.reshape(a.shape + (1,) * (prod.ndim - 1))
        zero = np.zeros((1,) + total.shape)
        first_sums = np.concatenate([zero, np.cumsum(head, axis=0)])
        last_sums = np.concatenate([zero,
                                    np.cumsum(ring[newest_first], axis=0)])
        mean = total / n
        leading = total - last_sums
        trailing = total - first_sums
        return (prod - mean * (leading + trailing) +
                expand(pairs) * mean * mean) / expand(pairs)

    return tree_lib.tree_map(extract, state.head, state.ring, state.total,
                             state.prod)


def effective_sample_size(auto_covariance, num_points: int):
    """ESS from an auto-covariance sequence via Geyer's initial positive sequence.

    ``ESS = n / tau`` with ``tau = -1 + 2 * sum_m (rho[2m] + rho[2m + 1])``
    summed while the pair sums stay positive. ``tau`` is floored at
    ``1 / log10(n)`` so strongly antithetic chains report a finite ESS.

    Raises:
      DegenerateStatistic: if any element has zero lag-0 variance.
    """

    def ess(acov):
        acov = np.asarray(acov, dtype=np.float64)
        c0 = acov[0]
        if np.any(c0 <= 0):
            raise DegenerateStatistic(
                'effective sample size is undefined for a constant stream')
        rho = (acov / c0).reshape(acov.shape[0], -1)
        tau = kernels.geyer_tau(np.ascontiguousarray(rho))
        tau = np.maximum(tau, 1.0 / math.log10(max(num_points, 2)))
        return (num_points / tau).reshape(acov.shape[1:])

    return tree_lib.tree_map(ess, auto_covariance)
