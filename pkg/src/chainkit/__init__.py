"""Composable, purely functional Markov chain building blocks.

Transition kernels take a state and return ``(new_state, extra)``. States,
gradients and side outputs are trees of NumPy arrays whose leading axis
indexes independent chains.
"""

from chainkit.errors import (ChainkitError, DegenerateStatistic,
                             InsufficientChains, InsufficientSamples,
                             NonFiniteValue, NonInvertible, ShapeError,
                             StructureMismatch)
from chainkit.integrators import (IntegratorExtra, IntegratorState,
                                  gaussian_momentum_sample,
                                  hamiltonian_integrator, leapfrog_step,
                                  make_gaussian_kinetic_energy_fn)
from chainkit.mcmc import (HamiltonianMonteCarloExtra,
                           HamiltonianMonteCarloState,
                           MetropolisHastingsExtra,
                           hamiltonian_monte_carlo_init,
                           hamiltonian_monte_carlo_step,
                           metropolis_hastings_step)
from chainkit.optimize import (AdamExtra, AdamState, GradientDescentExtra,
                               GradientDescentState, adam_init, adam_step,
                               gradient_descent_init, gradient_descent_step)
from chainkit.potential import (LossResult, PotentialResult, call_loss_fn,
                                call_potential_fn, finite_diff_grad,
                                make_surrogate_loss_fn)
from chainkit.reparam import (Affine, Compose, Diffeomorphism, Exp, Identity,
                              Softplus, TreeDiffeomorphism,
                              reparameterize_potential_fn)
from chainkit.rng import (RngKey, key_from_seed, normal_sample, split,
                          uniform_sample)
from chainkit.stats import (AutoCovarianceState, EwmaExtra, EwmaState,
                            PotentialScaleReductionState,
                            RunningCovarianceState, RunningMeanState,
                            RunningVarianceState, auto_covariance_extract,
                            auto_covariance_init, auto_covariance_step,
                            effective_sample_size, ewma_init, ewma_step,
                            potential_scale_reduction_extract,
                            potential_scale_reduction_init,
                            potential_scale_reduction_step,
                            running_covariance_extract,
                            running_covariance_init, running_covariance_merge,
                            running_covariance_step, running_mean_init,
                            running_mean_merge, running_mean_step,
                            running_variance_extract, running_variance_init,
                            running_variance_merge, running_variance_step)
from chainkit.trace import TraceResult, call_transition_operator, trace
from chainkit.tree import (mask_zip, tree_flatten, tree_leaves, tree_map,
                           tree_structure, tree_unflatten, tree_zip_with,
                           validate_batched)

__version__ = '0.1.0'
