"""Command-line harness: HMC on a synthetic Bayesian logistic regression.

Modes:
  basic      plain HMC, full trace
  thinned    HMC traced every ``num_substeps`` steps via a nested trace
  reparam    HMC in a whitened space around the MAP point
  adapt      step size tuned by Adam on a surrogate acceptance loss
  streaming  running covariance, R-hat and ESS without keeping the chain

Writes ``chain.csv`` (traced modes), ``diagnostics.csv`` (streaming) and
``summary.json`` to ``--out-dir``. All files are deterministic in the flags.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import pathlib
import sys
import time

import numpy as np

from chainkit import mcmc, optimize, recipes, reparam, rng, stats
from chainkit.logistic import generate_dataset, make_logistic_regression_target
from chainkit.trace import trace

MODES = ('basic', 'thinned', 'reparam', 'adapt', 'streaming')
CHAIN_COLUMNS_FIXED = ('step', 'chain')


class ConfigError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    mode: str = 'basic'
    num_steps: int = 2000
    num_substeps: int = 5
    num_chains: int = 8
    step_size: float = 0.1
    num_integrator_steps: int = 10
    learning_rate: float = 0.01
    seed: int = 0
    n: int = 500
    d: int = 4
    out_dir: str = 'out'
    warmup: int | None = None
    max_lag: int = 64

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f'unknown mode {self.mode!r}; pick from {MODES}')
        for name in ('num_steps', 'num_substeps', 'num_chains',
                     'num_integrator_steps', 'n', 'd', 'max_lag'):
            if getattr(self, name) < 1:
                raise ConfigError(f'--{name.replace("_", "-")} must be >= 1')
        if not self.step_size > 0 or not math.isfinite(self.step_size):
            raise ConfigError('--step-size must be positive')
        if not self.learning_rate > 0:
            raise ConfigError('--learning-rate must be positive')
        if self.warmup is not None and self.warmup < 0:
            raise ConfigError('--warmup must be >= 0')
        if not 0 <= self.seed < 2**64:
            raise ConfigError('--seed must be in [0, 2**64)')
        if self.mode == 'thinned' and self.num_steps % self.num_substeps:
            raise ConfigError(
                f'--num-substeps {self.num_substeps} must divide --num-steps '
                f'{self.num_steps}')
        if self.mode == 'streaming':
            if self.num_chains < 2:
                raise ConfigError('streaming mode needs --num-chains >= 2')
            if self.num_steps <= self.max_lag:
                raise ConfigError('streaming mode needs --num-steps > '
                                  '--max-lag')


def _fmt(x) -> str:
    return format(float(x), '.17g')


def _write_chain_csv(path, steps, w, is_accepted):
    """``w`` is ``[T, C, D]``, ``is_accepted`` ``[T, C]``."""
    num_steps, num_chains, dim = w.shape
    header = list(CHAIN_COLUMNS_FIXED) + [f'w_{i}' for i in range(dim)] + [
        'is_accepted']
    lines = [','.join(header)]
    for t in range(num_steps):
        for c in range(num_chains):
            lines.append(','.join(
                [str(int(steps[t])), str(c)] + [_fmt(v) for v in w[t, c]] +
                [str(int(is_accepted[t, c]))]))
    path.write_text('\n'.join(lines) + '\n')


def _write_diagnostics_csv(path, rows):
    lines = ['statistic,index_0,index_1,value']
    for name, i, j, value in rows:
        lines.append(f'{name},{"" if i is None else i},'
                     f'{"" if j is None else j},{_fmt(value)}')
    path.write_text('\n'.join(lines) + '\n')


def _setup(config: ExperimentConfig):
    features, labels = generate_dataset(config.seed, config.n, config.d)
    target = make_logistic_regression_target(features, labels)
    init_key, chain_key = rng.split(rng.key_from_seed(config.seed), 4)[2:]
    w_init = rng.normal_sample(init_key, (config.num_chains, config.d))
    return features, labels, target, w_init, chain_key


def _map_diffeomorphism(features, labels, target):
    """Affine map centred at the MAP with the inverse-root Hessian diagonal."""

    def loss_fn(w):
        log_prob, grad, _ = target(w)
        return -log_prob, -grad, ()

    curvature = 1.0 + 0.25 * np.linalg.norm(features, ord=2)**2
    gd_kernel = lambda s: optimize.gradient_descent_step(
        s, loss_fn, learning_rate=1.0 / curvature)
    init = optimize.gradient_descent_init(np.zeros((1, features.shape[1])))
    final, _ = trace(init, gd_kernel, 500, trace_mask=False)
    w_map = final.state[0]
    p = 1.0 / (1.0 + np.exp(-(features @ w_map)))
    hessian_diag = 1.0 + np.einsum('n,nd,nd->d', p * (1.0 - p), features,
                                   features)
    return reparam.Affine(shift=w_map, scale=1.0 / np.sqrt(hessian_diag))


def run(config: ExperimentConfig) -> dict:
    """Runs one experiment, writes its files and returns the summary dict."""
    config.validate()
    out_dir = pathlib.Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    features, labels, target, w_init, key = _setup(config)
    summary = {
        'mode': config.mode,
        'num_chains': config.num_chains,
        'num_steps': config.num_steps,
        'seed': config.seed,
    }
    step_size = config.step_size
    L = config.num_integrator_steps

    if config.mode == 'basic':
        kernel = recipes.hmc_kernel(target, step_size, L)
        _, (w, _, acc) = trace(
            (mcmc.hamiltonian_monte_carlo_init(w_init, target), key), kernel,
            config.num_steps, trace_mask=(True, False, True))
        steps = np.arange(config.num_steps)
    elif config.mode == 'thinned':
        kernel = recipes.thinned(recipes.hmc_kernel(target, step_size, L),
                                 config.num_substeps)
        num_outer = config.num_steps // config.num_substeps
        _, (w, _, acc) = trace(
            (mcmc.hamiltonian_monte_carlo_init(w_init, target), key), kernel,
            num_outer, trace_mask=(True, False, True))
        steps = (np.arange(num_outer) + 1) * config.num_substeps - 1
    elif config.mode == 'reparam':
        diffeo = _map_diffeomorphism(features, labels, target)
        reparam_target, y_init = reparam.reparameterize_potential_fn(
            target, diffeo, w_init)
        kernel = recipes.reparam_hmc_kernel(reparam_target, step_size, L)
        _, (w, _, acc) = trace(
            (mcmc.hamiltonian_monte_carlo_init(y_init, reparam_target), key),
            kernel, config.num_steps, trace_mask=(True, False, True))
        steps = np.arange(config.num_steps)
    elif config.mode == 'adapt':
        kernel = recipes.adaptive_hmc_kernel(
            target, L, learning_rate=config.learning_rate,
            num_adaptation_steps=config.warmup)
        (_, log_step_state, _), (w, acc, step_sizes, _) = trace(
            (mcmc.hamiltonian_monte_carlo_init(w_init, target),
             optimize.adam_init(np.log(step_size)), key), kernel,
            config.num_steps)
        steps = np.arange(config.num_steps)
        summary['final_step_size'] = float(np.exp(log_step_state.state))
    else:
        kernel = recipes.streaming_hmc_kernel(target, step_size, L)
        shape = (config.num_chains, config.d)
        init = (mcmc.hamiltonian_monte_carlo_init(w_init, target),
                stats.running_covariance_init(((config.d,), (config.n,))),
                stats.potential_scale_reduction_init(shape),
                stats.auto_covariance_init(shape, config.max_lag), key)
        (_, cov_state, rhat_state, acov_state, _), acc = trace(
            init, kernel, config.num_steps)
        _write_diagnostics_csv(out_dir / 'diagnostics.csv',
                               _streaming_rows(cov_state, rhat_state,
                                               acov_state))
        w = None

    if w is not None:
        _write_chain_csv(out_dir / 'chain.csv', steps, w, acc)
        summary['traced_steps'] = int(w.shape[0])
    acc = np.asarray(acc, dtype=np.float64)
    quarter = max(1, acc.shape[0] // 4)
    summary['acceptance_rate'] = float(np.mean(acc))
    summary['acceptance_rate_final_quarter'] = float(np.mean(acc[-quarter:]))
    if 'final_step_size' not in summary:
        summary['step_size'] = float(step_size)
    (out_dir / 'summary.json').write_text(
        json.dumps(summary, indent=2, sort_keys=True) + '\n')
    return summary


def _streaming_rows(cov_state, rhat_state, acov_state):
    w_mean, logits_mean = cov_state.mean
    w_cov, logits_cov = cov_state.covariance
    rows = [('w_mean', i, None, v) for i, v in enumerate(w_mean)]
    rows += [('w_covariance', i, j, w_cov[i, j])
             for i in range(w_cov.shape[0]) for j in range(w_cov.shape[1])]
    rows += [('logits_mean', i, None, v) for i, v in enumerate(logits_mean)]
    rows += [('logits_variance', i, None, v)
             for i, v in enumerate(np.diagonal(logits_cov))]
    rhat = stats.potential_scale_reduction_extract(rhat_state)
    rows += [('rhat', i, None, v) for i, v in enumerate(rhat)]
    per_chain_ess = stats.effective_sample_size(
        stats.auto_covariance_extract(acov_state), acov_state.num_points)
    rows += [('ess', i, None, v)
             for i, v in enumerate(np.sum(per_chain_ess, axis=0))]
    return rows


def build_parser() -> argparse.ArgumentParser:
    defaults = ExperimentConfig()
    p = argparse.ArgumentParser(
        prog='chainkit',
        description='HMC on a synthetic Bayesian logistic regression.')
    p.add_argument('--mode', choices=MODES, default=defaults.mode)
    p.add_argument('--num-steps', type=int, default=defaults.num_steps)
    p.add_argument('--num-substeps', type=int, default=defaults.num_substeps,
                   help='inner steps per recorded step in thinned mode')
    p.add_argument('--num-chains', type=int, default=defaults.num_chains)
    p.add_argument('--step-size', type=float, default=defaults.step_size,
                   help='leapfrog step size (initial value in adapt mode)')
    p.add_argument('--num-integrator-steps', type=int,
                   default=defaults.num_integrator_steps)
    p.add_argument('--learning-rate', type=float,
                   default=defaults.learning_rate,
                   help='Adam learning rate for step-size adaptation')
    p.add_argument('--seed', type=int, default=defaults.seed)
    p.add_argument('--n', type=int, default=defaults.n,
                   help='number of data points')
    p.add_argument('--d', type=int, default=defaults.d,
                   help='number of features')
    p.add_argument('--out-dir', default=defaults.out_dir)
    p.add_argument('--warmup', type=int, default=None,
                   help='stop adapting the step size after this many steps')
    p.add_argument('--max-lag', type=int, default=defaults.max_lag,
                   help='largest auto-covariance lag in streaming mode')
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = ExperimentConfig(**vars(args))
    start = time.perf_counter()
    try:
        summary = run(config)
    except ConfigError as e:
        print(f'chainkit: error: {e}', file=sys.stderr)
        return 2
    elapsed = time.perf_counter() - start
    print(f'mode={summary["mode"]} '
          f'acceptance={summary["acceptance_rate"]:.3f} '
          f'wall_time={elapsed:.2f}s out_dir={config.out_dir}')
    return 0


if __name__ == '__main__':
    sys.exit(main())
