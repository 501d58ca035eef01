"""Target densities with explicit gradients and side information.

A potential function maps a state tree to ``(log_density, grad, extra)``:
the per-chain un-normalized log density (shape ``[C]``), its gradient with
respect to the state (same structure as the state) and an arbitrary tree of
side information. Loss functions use the same convention with the loss in the
first slot.

There is no automatic differentiation here. Every potential supplies its own
gradient and :func:`finite_diff_grad` is the oracle used to check them.
"""

from __future__ import annotations

from typing import Any, Callable, NamedTuple

import numpy as np

from chainkit import tree as tree_lib
from chainkit.errors import NonFiniteValue, ShapeError, StructureMismatch

__all__ = [
    'LossFn',
    'LossResult',
    'PotentialFn',
    'PotentialResult',
    'call_loss_fn',
    'call_potential_fn',
    'finite_diff_grad',
    'make_surrogate_loss_fn',
]


class PotentialResult(NamedTuple):
    log_density: np.ndarray
    grad: Any
    extra: Any


class LossResult(NamedTuple):
    loss: np.ndarray
    grad: Any
    extra: Any


PotentialFn = Callable[[Any], tuple[np.ndarray, Any, Any]]
LossFn = Callable[[Any], tuple[np.ndarray, Any, Any]]


def _check_grad(grad, state):
    def check(g, x):
        if np.shape(g) != np.shape(x):
            raise StructureMismatch(
                f'gradient leaf shape {np.shape(g)} does not match state leaf '
                f'shape {np.shape(x)}')
        return np.asarray(g, dtype=np.float64)

    return tree_lib.tree_map(check, grad, state)


def call_potential_fn(fn: PotentialFn, state) -> PotentialResult:
    """Calls ``fn`` and normalizes its output to a :class:`PotentialResult`."""
    out = fn(state)
    if not isinstance(out, tuple) or len(out) != 3:
        raise TypeError('a potential function must return a '
                        '(log_density, grad, extra) triple')
    log_density, grad, extra = out
    log_density = np.asarray(log_density, dtype=np.float64)
    if log_density.ndim != 1:
        raise ShapeError(
            f'log density must have shape [num_chains], got {log_density.shape}')
    return PotentialResult(log_density, _check_grad(grad, state), extra)


def call_loss_fn(fn: LossFn, state) -> LossResult:
    out = fn(state)
    if not isinstance(out, tuple) or len(out) != 3:
        raise TypeError('a loss function must return a (loss, grad, extra) '
                        'triple')
    loss, grad, extra = out
    return LossResult(np.asarray(loss, dtype=np.float64),
                      _check_grad(grad, state), extra)


def finite_diff_grad(fn: Callable[[Any], Any], x, h: float = 1e-5,
                     relative: bool = True):
    """Central-difference gradient of ``fn`` at ``x``.

    ``fn`` returns a scalar or a per-chain vector (a tuple output is read from
    its first element). The gradient of the sum of its outputs is taken, which
    for a per-chain function with independent chains is each chain's own
    gradient.

    Args:
      fn: Function of a state tree.
      x: Point to differentiate at.
      h: Base probe step.
      relative: Scale the step by ``1 + |x_i|`` per coordinate.

    Returns:
      A tree shaped like ``x``.

    Raises:
      NonFiniteValue: if any probe evaluates to a non-finite value.
    """
    if h <= 0:
        raise ValueError(f'h must be positive, got {h}')
    leaves, treedef = tree_lib.tree_flatten(x)
    leaves = [np.array(leaf, dtype=np.float64) for leaf in leaves]

    def total(ls):
        out = fn(tree_lib.tree_unflatten(treedef, ls))
        if isinstance(out, tuple):
            out = out[0]
        out = np.asarray(out, dtype=np.float64)
        if not np.all(np.isfinite(out)):
            raise NonFiniteValue('finite-difference probe is not finite')
        return np.sum(out)

    grads = []
    for i, leaf in enumerate(leaves):
        g = np.empty_like(leaf)
        flat = leaf.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            step = h * (1.0 + abs(flat[j])) if relative else h
            probe = [lf.copy() for lf in leaves]
            probe[i].reshape(-1)[j] = flat[j] + step
            up = total(probe)
            probe[i].reshape(-1)[j] = flat[j] - step
            down = total(probe)
            gflat[j] = (up - down) / (2.0 * step)
        grads.append(g)
    return tree_lib.tree_unflatten(treedef, grads)


def make_surrogate_loss_fn(grad_fn: Callable[[Any], tuple[Any, Any]]) -> LossFn:
    """Builds a loss whose gradient is whatever ``grad_fn`` reports.

    Useful for driving gradient-based optimizers with statistics that are not
    derivatives of anything, e.g. ``target_rate - acceptance_rate``. The loss
    value is always 0.

    Args:
      grad_fn: Maps the parameters to ``(grad, extra)``. ``grad`` is broadcast
        against the parameter tree, both in structure and leaf shape.

    Returns:
      A loss function returning ``(0., grad, extra)``.
    """

    def loss_fn(params):
        grad, extra = grad_fn(params)
        try:
            grad = tree_lib.broadcast_structure(grad, params)
            grad = tree_lib.tree_map(
                lambda g, p: np.broadcast_to(
                    np.asarray(g, dtype=np.float64), np.shape(p)).copy(),
                grad, params)
        except ValueError as e:
            raise StructureMismatch(
                f'surrogate gradient does not broadcast to the parameters: {e}'
            ) from e
        return np.float64(0.0), grad, extra

    return loss_fn
