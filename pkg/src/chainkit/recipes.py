"""Ready-made kernels composing the library pieces.

Each factory returns a kernel in the plain-tuple-state convention used by
:func:`chainkit.trace.trace`, so the pieces of the chain state arrive as
separate arguments.
"""

from __future__ import annotations

import numpy as np

from chainkit import mcmc, optimize, rng, stats
from chainkit.potential import make_surrogate_loss_fn
from chainkit.trace import trace

__all__ = [
    'acceptance_probability',
    'adaptive_hmc_kernel',
    'hmc_kernel',
    'reparam_hmc_kernel',
    'streaming_hmc_kernel',
    'thinned',
]


def hmc_kernel(target_log_prob_fn, step_size, num_integrator_steps):
    """HMC over ``(hmc_state, key)``; records ``(state, state_extra, is_accepted)``."""

    def kernel(hmc_state, key):
        hmc_key, key = rng.split(key)
        hmc_state, hmc_extra = mcmc.hamiltonian_monte_carlo_step(
            hmc_state, target_log_prob_fn, step_size, num_integrator_steps,
            seed=hmc_key)
        return (hmc_state, key), (hmc_state.state, hmc_state.state_extra,
                                  hmc_extra.is_accepted)

    return kernel


def thinned(kernel, num_substeps: int):
    """Runs ``kernel`` ``num_substeps`` times and keeps only the last side output."""

    def thinned_kernel(*state):
        return trace(state, kernel, num_substeps, trace_mask=False)

    return thinned_kernel


def reparam_hmc_kernel(reparam_log_prob_fn, step_size, num_integrator_steps):
    """HMC in a reparameterized space, recording original-space states.

    ``reparam_log_prob_fn`` comes from
    :func:`chainkit.reparam.reparameterize_potential_fn`, so its side output
    starts with ``(original_state, target_extra)``.
    """

    def kernel(hmc_state, key):
        hmc_key, key = rng.split(key)
        hmc_state, hmc_extra = mcmc.hamiltonian_monte_carlo_step(
            hmc_state, reparam_log_prob_fn, step_size, num_integrator_steps,
            seed=hmc_key)
        x, target_extra = hmc_state.state_extra[:2]
        return (hmc_state, key), (x, target_extra, hmc_extra.is_accepted)

    return kernel


def acceptance_probability(log_accept_ratio):
    """Chain-averaged ``min(1, exp(log_accept_ratio))``; NaN counts as 0."""
    lar = np.asarray(log_accept_ratio, dtype=np.float64)
    lar = np.where(np.isnan(lar), -np.inf, lar)
    return np.mean(np.exp(np.minimum(0.0, lar)))


def adaptive_hmc_kernel(target_log_prob_fn, num_integrator_steps,
                        learning_rate=1e-2, target_accept_prob=0.8,
                        num_adaptation_steps=None):
    """HMC whose log step size is tuned by Adam on a surrogate loss.

    The surrogate gradient is ``target_accept_prob - p_accept``, so descending
    it raises the step size while acceptance is too high. Adaptation stops
    after ``num_adaptation_steps`` updates when that is set.

    The state is ``(hmc_state, log_step_size_state, key)`` with
    ``log_step_size_state`` an :class:`chainkit.optimize.AdamState` over a
    scalar. Records ``(state, is_accepted, step_size, p_accept)``.
    """

    def kernel(hmc_state, log_step_size_state, key):
        hmc_key, key = rng.split(key)
        step_size = np.exp(log_step_size_state.state)
        hmc_state, hmc_extra = mcmc.hamiltonian_monte_carlo_step(
            hmc_state, target_log_prob_fn, step_size, num_integrator_steps,
            seed=hmc_key)
        p_accept = acceptance_probability(hmc_extra.log_accept_ratio)
        if (num_adaptation_steps is None or
                log_step_size_state.t < num_adaptation_steps):
            loss_fn = make_surrogate_loss_fn(
                lambda _: (target_accept_prob - p_accept, ()))
            log_step_size_state, _ = optimize.adam_step(
                log_step_size_state, loss_fn, learning_rate=learning_rate)
        return (hmc_state, log_step_size_state, key), (
            hmc_state.state, hmc_extra.is_accepted, np.float64(step_size),
            p_accept)

    return kernel


def streaming_hmc_kernel(target_log_prob_fn, step_size, num_integrator_steps):
    """HMC that folds every state into streaming statistics.

    The state is ``(hmc_state, cov_state, rhat_state, acov_state, key)``:
    a running covariance over ``(state, state_extra)`` pooled across chains, a
    potential scale reduction over the state and a per-chain auto-covariance
    of the state. Records only ``is_accepted``.
    """

    def kernel(hmc_state, cov_state, rhat_state, acov_state, key):
        hmc_key, key = rng.split(key)
        hmc_state, hmc_extra = mcmc.hamiltonian_monte_carlo_step(
            hmc_state, target_log_prob_fn, step_size, num_integrator_steps,
            seed=hmc_key)
        w, extra = hmc_state.state, hmc_state.state_extra
        cov_state, _ = stats.running_covariance_step(cov_state, (w, extra),
                                                     axis=0)
        rhat_state, _ = stats.potential_scale_reduction_step(rhat_state, w)
        acov_state, _ = stats.auto_covariance_step(acov_state, w)
        return (hmc_state, cov_state, rhat_state, acov_state, key), (
            hmc_extra.is_accepted)

    return kernel
