"""Hamiltonian dynamics: kinetic energy, momentum draws and leapfrog integration."""

from __future__ import annotations

from typing import Any, Callable, NamedTuple

import numpy as np

from chainkit import rng
from chainkit import tree as tree_lib
from chainkit.errors import ShapeError
from chainkit.potential import PotentialFn, call_potential_fn

__all__ = [
    'IntegratorExtra',
    'IntegratorState',
    'KineticFn',
    'gaussian_momentum_sample',
    'hamiltonian_integrator',
    'leapfrog_step',
    'make_gaussian_kinetic_energy_fn',
]

# Same calling convention as a potential: ``(energy, grad, extra)``.
KineticFn = Callable[[Any], tuple[np.ndarray, Any, Any]]


class IntegratorState(NamedTuple):
    """Position, momentum and the cached potential evaluation at the position."""

    state: Any
    state_extra: Any
    state_grads: Any
    target_log_prob: np.ndarray
    momentum: Any


class IntegratorExtra(NamedTuple):
    """Integrator side outputs.

    ``step_log_probs`` is ``()`` unless requested, in which case it has shape
    ``[num_steps, C]``.
    """

    energy_change: np.ndarray
    step_log_probs: Any = ()


def make_gaussian_kinetic_energy_fn(num_batch_dims: int) -> KineticFn:
    """Kinetic energy ``0.5 * sum(p**2)`` for an identity mass matrix.

    The sum runs over every axis past the first ``num_batch_dims`` and over all
    leaves. The returned function also gives the gradient (which is ``p``).
    """
    if num_batch_dims < 0:
        raise ValueError(f'num_batch_dims must be >= 0, got {num_batch_dims}')

    def kinetic_energy_fn(momentum):
        leaves = tree_lib.tree_leaves(momentum)
        if not leaves:
            raise ShapeError('momentum tree has no leaves')
        energy = 0.0
        for p in leaves:
            p = np.asarray(p)
            if p.ndim < num_batch_dims:
                raise ShapeError(
                    f'momentum leaf of shape {p.shape} has fewer than '
                    f'{num_batch_dims} batch axes')
            axes = tuple(range(num_batch_dims, p.ndim))
            energy = energy + 0.5 * np.sum(np.square(p), axis=axes)
        return np.asarray(energy, dtype=np.float64), momentum, ()

    return kinetic_energy_fn


def gaussian_momentum_sample(state, key: rng.RngKey):
    """Standard-normal momentum with the structure of ``state``."""
    leaves, treedef = tree_lib.tree_flatten(state)
    sizes = [np.size(leaf) for leaf in leaves]
    flat = rng.normal_sample(key, (sum(sizes),))
    out = []
    offset = 0
    for leaf, size in zip(leaves, sizes):
        out.append(flat[offset:offset + size].reshape(np.shape(leaf)))
        offset += size
    return tree_lib.tree_unflatten(treedef, out)


def leapfrog_step(integrator_state: IntegratorState, step_size,
                  target_log_prob_fn: PotentialFn,
                  kinetic_energy_fn: KineticFn):
    """One leapfrog step.

    Half-kicks the momentum with the cached gradient, drifts the position along
    the kinetic gradient, evaluates the potential once at the new position and
    half-kicks again.

    Returns:
      ``(new_integrator_state, ())``.
    """
    s = integrator_state
    with np.errstate(over='ignore', invalid='ignore'):
        half_kick = tree_lib.tree_map(
            lambda p, g: p + 0.5 * step_size * g, s.momentum, s.state_grads)
        _, velocity, _ = kinetic_energy_fn(half_kick)
        position = tree_lib.tree_map(
            lambda q, v: q + step_size * v, s.state, velocity)
        log_prob, grads, extra = call_potential_fn(target_log_prob_fn, position)
        momentum = tree_lib.tree_map(
            lambda p, g: p + 0.5 * step_size * g, half_kick, grads)
    return IntegratorState(position, extra, grads, log_prob, momentum), ()


def hamiltonian_integrator(integrator_state: IntegratorState,
                           num_steps: int,
                           integrator_step_fn: Callable,
                           kinetic_energy_fn: KineticFn,
                           record_step_log_probs: bool = False):
    """Runs ``integrator_step_fn`` ``num_steps`` times and tracks the energy.

    Energy is ``-target_log_prob + kinetic``; ``energy_change`` is final minus
    initial, per chain.

    Args:
      integrator_state: Starting ``IntegratorState``.
      num_steps: Number of integrator steps, at least 1.
      integrator_step_fn: ``IntegratorState -> (IntegratorState, extra)``.
      kinetic_energy_fn: Kinetic energy function.
      record_step_log_probs: Also return the log density after every step.

    Returns:
      ``(final_integrator_state, IntegratorExtra)``.
    """
    if num_steps < 1:
        raise ValueError(f'num_steps must be >= 1, got {num_steps}')
    initial_energy = (-integrator_state.target_log_prob +
                      kinetic_energy_fn(integrator_state.momentum)[0])
    step_log_probs = [] if record_step_log_probs else None
    state = integrator_state
    for _ in range(num_steps):
        state, _ = integrator_step_fn(state)
        if step_log_probs is not None:
            step_log_probs.append(state.target_log_prob)
    with np.errstate(over='ignore', invalid='ignore'):
        final_energy = (-state.target_log_prob +
                        kinetic_energy_fn(state.momentum)[0])
        energy_change = final_energy - initial_energy
    return state, IntegratorExtra(
        energy_change=energy_change,
        step_log_probs=(np.stack(step_log_probs)
                        if step_log_probs is not None else ()),
    )
