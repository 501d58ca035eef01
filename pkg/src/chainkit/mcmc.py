"""Metropolis-Hastings and Hamiltonian Monte Carlo transition kernels."""

from __future__ import annotations

from typing import Any, NamedTuple

import numpy as np

from chainkit import integrators
from chainkit import rng
from chainkit import tree as tree_lib
from chainkit.errors import ShapeError
from chainkit.potential import PotentialFn, call_potential_fn

__all__ = [
    'HamiltonianMonteCarloExtra',
    'HamiltonianMonteCarloState',
    'MetropolisHastingsExtra',
    'hamiltonian_monte_carlo_init',
    'hamiltonian_monte_carlo_step',
    'metropolis_hastings_step',
]


class MetropolisHastingsExtra(NamedTuple):
    is_accepted: np.ndarray


class HamiltonianMonteCarloState(NamedTuple):
    state: Any
    state_grads: Any
    target_log_prob: np.ndarray
    state_extra: Any


class HamiltonianMonteCarloExtra(NamedTuple):
    is_accepted: np.ndarray
    log_accept_ratio: np.ndarray
    proposed_hmc_state: HamiltonianMonteCarloState
    integrator_state: integrators.IntegratorState
    integrator_extra: integrators.IntegratorExtra
    initial_momentum: Any


def metropolis_hastings_step(current_state, proposed_state, energy_change,
                             seed: rng.RngKey):
    """Accepts or rejects ``proposed_state`` chain by chain.

    Chain ``c`` moves iff ``log(u_c) < -energy_change_c`` with
    ``u_c ~ Uniform(0, 1)``. A NaN energy change counts as a rejection. Leaves
    of both states are selected along their leading (chain) axis, so rejected
    chains come back bitwise unchanged.

    Args:
      current_state: Current state tree.
      proposed_state: Proposed state tree, same structure.
      energy_change: ``E(proposed) - E(current)``, shape ``[C]``.
      seed: Key for the uniform draws.

    Returns:
      ``(new_state, MetropolisHastingsExtra)``.
    """
    energy_change = np.asarray(energy_change, dtype=np.float64)
    if energy_change.ndim != 1:
        raise ShapeError(
            f'energy_change must have shape [C], got {energy_change.shape}')
    num = energy_change.shape[0]
    tree_lib.validate_batched(current_state, num)
    tree_lib.validate_batched(proposed_state, num)
    log_accept_ratio = np.where(np.isnan(energy_change), -np.inf,
                                -energy_change)
    log_uniform = np.log(rng.uniform_sample(seed, (num,)))
    is_accepted = log_uniform < log_accept_ratio
    new_state = tree_lib.select_chains(is_accepted, proposed_state,
                                       current_state)
    return new_state, MetropolisHastingsExtra(is_accepted=is_accepted)


def hamiltonian_monte_carlo_init(state, target_log_prob_fn: PotentialFn):
    """Evaluates the target once and caches the result alongside ``state``."""
    state = tree_lib.tree_map(lambda x: np.asarray(x, dtype=np.float64), state)
    num = tree_lib.num_chains(state)
    log_prob, grads, extra = call_potential_fn(target_log_prob_fn, state)
    if log_prob.shape != (num,):
        raise ShapeError(
            f'log density shape {log_prob.shape} does not match {num} chains')
    return HamiltonianMonteCarloState(
        state=state, state_grads=grads, target_log_prob=log_prob,
        state_extra=extra)


def hamiltonian_monte_carlo_step(hmc_state: HamiltonianMonteCarloState,
                                 target_log_prob_fn: PotentialFn,
                                 step_size,
                                 num_integrator_steps: int,
                                 seed: rng.RngKey):
    """One HMC transition built from the public pieces.

    Samples a Gaussian momentum, integrates with leapfrog and applies a
    Metropolis-Hastings correction on the integrator's energy change.

    Args:
      hmc_state: Current ``HamiltonianMonteCarloState``.
      target_log_prob_fn: Potential function.
      step_size: Leapfrog step size; a float or an array broadcastable
        against the state leaves.
      num_integrator_steps: Leapfrog steps per proposal.
      seed: Key for the momentum and the accept test.

    Returns:
      ``(new_hmc_state, HamiltonianMonteCarloExtra)``. ``log_accept_ratio`` is
      not clamped at zero.
    """
    if num_integrator_steps < 1:
        raise ValueError(
            f'num_integrator_steps must be >= 1, got {num_integrator_steps}')
    if np.any(np.asarray(step_size) <= 0):
        raise ValueError('step_size must be positive')

    kinetic_energy_fn = integrators.make_gaussian_kinetic_energy_fn(
        np.ndim(hmc_state.target_log_prob))

    def integrator_step_fn(state):
        return integrators.leapfrog_step(state, step_size, target_log_prob_fn,
                                         kinetic_energy_fn)

    mh_key, sample_key = rng.split(seed)
    momentum = integrators.gaussian_momentum_sample(hmc_state.state, sample_key)
    integrator_state = integrators.IntegratorState(
        hmc_state.state, hmc_state.state_extra, hmc_state.state_grads,
        hmc_state.target_log_prob, momentum)
    integrator_state, integrator_extra = integrators.hamiltonian_integrator(
        integrator_state, num_integrator_steps, integrator_step_fn,
        kinetic_energy_fn)

    proposed_state = HamiltonianMonteCarloState(
        state=integrator_state.state,
        state_grads=integrator_state.state_grads,
        target_log_prob=integrator_state.target_log_prob,
        state_extra=integrator_state.state_extra)
    new_state, mh_extra = metropolis_hastings_step(
        hmc_state, proposed_state, integrator_extra.energy_change, seed=mh_key)

    return new_state, HamiltonianMonteCarloExtra(
        is_accepted=mh_extra.is_accepted,
        log_accept_ratio=-integrator_extra.energy_change,
        proposed_hmc_state=proposed_state,
        integrator_state=integrator_state,
        integrator_extra=integrator_extra,
        initial_momentum=momentum)
