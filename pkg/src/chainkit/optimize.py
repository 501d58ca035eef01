"""Optimizers as transition kernels: gradient descent and Adam."""

from __future__ import annotations

from typing import Any, NamedTuple

import numpy as np

from chainkit import tree as tree_lib
from chainkit.potential import LossFn, call_loss_fn

__all__ = [
    'AdamExtra',
    'AdamState',
    'GradientDescentExtra',
    'GradientDescentState',
    'adam_init',
    'adam_step',
    'gradient_descent_init',
    'gradient_descent_step',
]


def _as_float_tree(tree):
    return tree_lib.tree_map(lambda x: np.asarray(x, dtype=np.float64), tree)


class GradientDescentState(NamedTuple):
    state: Any


class GradientDescentExtra(NamedTuple):
    loss: np.ndarray
    loss_extra: Any
    grads: Any


def gradient_descent_init(state) -> GradientDescentState:
    return GradientDescentState(_as_float_tree(state))


def gradient_descent_step(gd_state: GradientDescentState, loss_fn: LossFn,
                          learning_rate):
    """``x <- x - learning_rate * grad``."""
    loss, grads, extra = call_loss_fn(loss_fn, gd_state.state)
    new_state = tree_lib.tree_map(lambda x, g: x - learning_rate * g,
                                  gd_state.state, grads)
    return GradientDescentState(new_state), GradientDescentExtra(
        loss=loss, loss_extra=extra, grads=grads)


class AdamState(NamedTuple):
    state: Any
    m: Any
    v: Any
    t: int


class AdamExtra(NamedTuple):
    loss: np.ndarray
    loss_extra: Any
    grads: Any


def adam_init(state) -> AdamState:
    state = _as_float_tree(state)
    return AdamState(state=state, m=tree_lib.zeros_like(state),
                     v=tree_lib.zeros_like(state), t=0)


def adam_step(adam_state: AdamState, loss_fn: LossFn, learning_rate,
              beta_1: float = 0.9, beta_2: float = 0.999,
              epsilon: float = 1e-8):
    """One Adam update with bias-corrected moment estimates.

    Args:
      adam_state: ``AdamState``.
      loss_fn: Loss function returning ``(loss, grad, extra)``.
      learning_rate: Step scale.
      beta_1: Decay of the first-moment estimate.
      beta_2: Decay of the second-moment estimate.
      epsilon: Added to the root of the second moment.

    Returns:
      ``(new_adam_state, AdamExtra)``.
    """
    if not (0.0 <= beta_1 < 1.0 and 0.0 <= beta_2 < 1.0):
        raise ValueError('beta_1 and beta_2 must lie in [0, 1)')
    loss, grads, extra = call_loss_fn(loss_fn, adam_state.state)
    t = adam_state.t + 1
    m = tree_lib.tree_map(lambda m, g: beta_1 * m + (1.0 - beta_1) * g,
                          adam_state.m, grads)
    v = tree_lib.tree_map(lambda v, g: beta_2 * v + (1.0 - beta_2) * g * g,
                          adam_state.v, grads)
    m_correction = 1.0 - beta_1**t
    v_correction = 1.0 - beta_2**t

    def update(x, m, v):
        m_hat = m / m_correction
        v_hat = v / v_correction
        return x - learning_rate * m_hat / (np.sqrt(v_hat) + epsilon)

    new_state = tree_lib.tree_map(update, adam_state.state, m, v)
    return AdamState(state=new_state, m=m, v=v, t=t), AdamExtra(
        loss=loss, loss_extra=extra, grads=grads)
