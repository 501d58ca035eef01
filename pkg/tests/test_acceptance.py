"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line; the lines are repeated in the
terminal summary of the pytest run.
"""

import math
import time

import numpy as np

from chainkit import integrators as I
from chainkit import mcmc, optimize, targets
from chainkit import stats as S
from chainkit.cli import ExperimentConfig, run
from chainkit.logistic import generate_dataset, make_logistic_regression_target
from chainkit.potential import finite_diff_grad
from chainkit.recipes import (adaptive_hmc_kernel, hmc_kernel,
                              reparam_hmc_kernel, thinned)
from chainkit.reparam import (Affine, Compose, Exp, Identity, Softplus,
                              TreeDiffeomorphism, reparameterize_potential_fn)
from chainkit.rng import key_from_seed, normal_sample, split
from chainkit.trace import trace
from oracles import ar1, batch_covariance, grad_rel_error

KINETIC = I.make_gaussian_kinetic_energy_fn(1)


def gamma_target(x):
    """Independent Gamma(3, 1) coordinates."""
    return np.sum(2.0 * np.log(x) - x, axis=1), 2.0 / x - 1.0, ()


def tree_target(x):
    """Banana on ``x[0]`` times Gamma(3, 1) on ``x[1]``."""
    lp0, g0, _ = targets.banana(0.2)(x[0])
    lp1, g1, _ = gamma_target(x[1])
    return lp0 + lp1, (g0, g1), ()


def tree_rel_error(fn, y):
    _, grad, _ = fn(y)
    fd = finite_diff_grad(fn, y)
    return max(float(np.max(np.linalg.norm(g - f, axis=1) /
                            np.linalg.norm(f, axis=1)))
               for g, f in zip(grad, fd))


def hmc_run(target, x0, step_size, num_integrator_steps, num_steps, seed):
    """Traced ``(state, state_extra, is_accepted)`` of plain HMC."""
    init = (mcmc.hamiltonian_monte_carlo_init(x0, target), key_from_seed(seed))
    kernel = hmc_kernel(target, step_size, num_integrator_steps)
    return trace(init, kernel, num_steps)


def chain_ess(draws, max_lag=200):
    """ESS of ``draws[T, C, D]`` summed over chains, per coordinate."""
    s = S.auto_covariance_init(draws.shape[1:], max_lag)
    for x in draws:
        s, _ = S.auto_covariance_step(s, x)
    ess = S.effective_sample_size(S.auto_covariance_extract(s), s.num_points)
    return np.sum(ess, axis=0)


def pooled_se(draws, max_lag=200):
    """Standard error of the pooled mean of ``draws[T, C, D]`` via the ESS."""
    flat = draws.reshape(-1, draws.shape[-1])
    return np.std(flat, axis=0) / np.sqrt(chain_ess(draws, max_lag))


def test_01_gradient_oracle(acceptance_report):
    start = time.perf_counter()
    features, labels = generate_dataset(0, 100, 4)
    bundled = {
        'standard_normal': (targets.standard_normal(), (3,)),
        'diagonal_normal': (targets.diagonal_normal([1.0, -1.0], [0.5, 3.0]),
                            (2,)),
        'multivariate_normal': (targets.multivariate_normal(
            [0.0, 1.0, 2.0],
            [[2.0, 0.3, 0.1], [0.3, 1.0, 0.2], [0.1, 0.2, 0.5]]), (3,)),
        'banana': (targets.banana(0.3, 2.0), (2,)),
        'logistic_regression': (
            make_logistic_regression_target(features, labels), (4,)),
    }
    reparameterized = {
        'identity': (targets.banana(0.3), Identity()),
        'affine': (targets.banana(0.3), Affine([1.0, 2.0], [0.5, -2.0])),
        'exp': (gamma_target, Exp()),
        'softplus': (gamma_target, Softplus()),
        'compose': (gamma_target, Compose(Affine(0.1, 3.0), Softplus())),
    }
    keys = iter(split(key_from_seed(0), 12))
    errors = {}
    for name, (fn, event) in bundled.items():
        errors[name] = grad_rel_error(fn, normal_sample(next(keys),
                                                        (100,) + event))
    for name, (fn, d) in reparameterized.items():
        y = normal_sample(next(keys), (100, 2))
        reparam_fn, _ = reparameterize_potential_fn(fn, d, d.forward(y)[0])
        errors[f'reparam_{name}'] = grad_rel_error(reparam_fn, y)
    tree_d = TreeDiffeomorphism((Affine(0.0, 2.0), Exp()))
    y = (normal_sample(next(keys), (100, 2)), normal_sample(next(keys), (100, 2)))
    tree_fn, _ = reparameterize_potential_fn(tree_target, tree_d,
                                             tree_d.forward(y)[0])
    errors['reparam_tree'] = tree_rel_error(tree_fn, y)
    elapsed = time.perf_counter() - start
    worst = max(errors, key=errors.get)
    ok = errors[worst] < 1e-4 and elapsed < 5.0
    acceptance_report(
        1, 'gradient oracle', ok,
        f'{len(errors)} potentials x 100 points, worst {worst} rel err '
        f'{errors[worst]:.1e} (< 1e-4), {elapsed:.2f}s (< 5s)')
    assert ok


def _energy_change(eps, num_steps):
    target = targets.standard_normal()
    q = np.array([[1.0]])
    lp, g, extra = target(q)
    s = I.IntegratorState(q, extra, g, lp, np.zeros((1, 1)))
    step = lambda s: I.leapfrog_step(s, eps, target, KINETIC)
    return I.hamiltonian_integrator(s, num_steps, step, KINETIC)


def test_02_leapfrog_order(acceptance_report):
    start = time.perf_counter()
    ratios = []
    for eps in (0.2, 0.1, 0.05):
        # Same trajectory length: L=10 at eps against L=20 at eps/2.
        coarse = _energy_change(eps, 10)[1].energy_change[0]
        fine = _energy_change(eps / 2, 20)[1].energy_change[0]
        ratios.append(abs(coarse) / abs(fine))
    target = targets.banana(0.3)
    q0 = normal_sample(key_from_seed(1), (16, 2))
    p0 = normal_sample(key_from_seed(2), (16, 2))
    lp, g, extra = target(q0)
    step = lambda s: I.leapfrog_step(s, 0.1, target, KINETIC)
    fwd, _ = I.hamiltonian_integrator(I.IntegratorState(q0, extra, g, lp, p0),
                                      10, step, KINETIC)
    back, _ = I.hamiltonian_integrator(fwd._replace(momentum=-fwd.momentum),
                                       10, step, KINETIC)
    round_trip = max(np.max(np.abs(back.state - q0)),
                     np.max(np.abs(-back.momentum - p0)))
    elapsed = time.perf_counter() - start
    ok = (all(3.0 <= r <= 5.0 for r in ratios) and round_trip < 1e-10 and
          elapsed < 1.0)
    acceptance_report(
        2, 'leapfrog order', ok,
        f'ratios {", ".join(f"{r:.3f}" for r in ratios)} (in [3, 5]), '
        f'round trip {round_trip:.1e} (< 1e-10), {elapsed:.2f}s (< 1s)')
    assert ok


def test_03_hmc_correctness(acceptance_report):
    start = time.perf_counter()
    target = targets.standard_normal()
    x0 = normal_sample(key_from_seed(3), (64, 2))
    _, (draws, _, accepted) = hmc_run(target, x0, 0.5, 10, 2000, seed=4)
    draws, accepted = draws[500:], accepted[500:]
    flat = draws.reshape(-1, 2)
    acceptance = accepted.mean()
    z = np.abs(flat.mean(axis=0)) / pooled_se(draws)
    cov = batch_covariance(flat, ddof=1)
    diag_err = np.max(np.abs(np.diag(cov) - 1.0))
    off_err = abs(cov[0, 1])
    elapsed = time.perf_counter() - start
    ok = (acceptance > 0.6 and np.all(z < 3.0) and diag_err < 0.1 and
          off_err < 0.1 and elapsed < 30.0)
    acceptance_report(
        3, 'HMC correctness', ok,
        f'acceptance {acceptance:.3f} (> 0.6), |mean|/SE '
        f'{np.max(z):.2f} (< 3), diag err {diag_err:.3f} (< 0.1), '
        f'off-diag {off_err:.3f} (< 0.1), {elapsed:.1f}s (< 30s)')
    assert ok


def test_04_mh_degenerate_cases(acceptance_report):
    cases = {-np.inf: True, 0.0: True, np.inf: False, np.nan: False}
    checked = 0
    failures = []
    for num_chains in (1, 2, 7, 64):
        current = {'x': np.arange(num_chains * 3.0).reshape(num_chains, 3),
                   'n': np.arange(num_chains)}
        proposed = {'x': -current['x'] - 1.0, 'n': current['n'] + 100}
        for energy_change, accept in cases.items():
            for seed in range(250):
                new, extra = mcmc.metropolis_hastings_step(
                    current, proposed, np.full(num_chains, energy_change),
                    key_from_seed(seed))
                expected = proposed if accept else current
                if not (np.all(extra.is_accepted == accept) and
                        new['x'].tobytes() == expected['x'].tobytes() and
                        new['n'].tobytes() == expected['n'].tobytes()):
                    failures.append((num_chains, energy_change, seed))
                checked += num_chains
    ok = not failures
    acceptance_report(
        4, 'MH degenerate cases', ok,
        f'{checked} chain decisions over dE in {{-inf, 0, +inf, nan}}, '
        f'{len(failures)} wrong or not bitwise')
    assert ok


def test_05_thinning_equivalence(acceptance_report):
    counter = lambda n: (n + 1, n)
    _, flat = trace(0, counter, 60)
    _, thin = trace(0, thinned(counter, 5), 12)
    counter_ok = thin.tobytes() == flat[4::5].tobytes()

    features, labels = generate_dataset(0, 200, 4)
    target = make_logistic_regression_target(features, labels)
    init = (mcmc.hamiltonian_monte_carlo_init(
        normal_sample(key_from_seed(5), (8, 4)), target), key_from_seed(6))
    kernel = hmc_kernel(target, 0.1, 10)
    _, flat_hmc = trace(init, kernel, 100)
    _, thin_hmc = trace(init, thinned(kernel, 5), 20)
    hmc_ok = all(t.tobytes() == f[4::5].tobytes()
                 for t, f in zip(thin_hmc, flat_hmc))
    ok = counter_ok and hmc_ok
    acceptance_report(
        5, 'thinning equivalence', ok,
        f'counter kernel bitwise {counter_ok}, HMC demo (w, logits, '
        f'is_accepted) bitwise {hmc_ok}')
    assert ok


def _rel_err(a, b):
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


def test_06_streaming_vs_batch(acceptance_report):
    start = time.perf_counter()
    z = normal_sample(key_from_seed(7), (10**4, 4))
    x = 10.0 + z @ np.array([[1.0, 0.5, 0.0, 0.0], [0.0, 2.0, 0.3, 0.0],
                             [0.0, 0.0, 0.1, 0.0], [0.0, 0.0, 0.0, 5.0]])
    mean, var, cov = x.mean(axis=0), x.var(axis=0), batch_covariance(x)

    def singly(init, step):
        s = init((4,))
        for row in x:
            s, _ = step(s, row)
        return s

    def batched(init, step):
        s = init((4,))
        for chunk in x.reshape(-1, 10, 4):
            s, _ = step(s, chunk, axis=0)
        return s

    def merged(init, step, merge):
        a, _ = step(init((4,)), x[:3700], axis=0)
        b = init((4,))
        for row in x[3700:]:
            b, _ = step(b, row)
        return merge(a, b)

    errs = []
    kinds = [
        (S.running_mean_init, S.running_mean_step, S.running_mean_merge,
         lambda s: [(s.mean, mean)]),
        (S.running_variance_init, S.running_variance_step,
         S.running_variance_merge,
         lambda s: [(s.mean, mean), (s.variance, var)]),
        (S.running_covariance_init, S.running_covariance_step,
         S.running_covariance_merge,
         lambda s: [(s.mean, mean), (s.covariance, cov)]),
    ]
    for init, step, merge, pairs in kinds:
        for s in (singly(init, step), batched(init, step),
                  merged(init, step, merge)):
            errs += [_rel_err(a, b) for a, b in pairs(s)]
    elapsed = time.perf_counter() - start
    ok = max(errs) < 1e-10 and elapsed < 5.0
    acceptance_report(
        6, 'streaming vs batch', ok,
        f'mean/var/cov x (single, batch-10, merged): worst rel err '
        f'{max(errs):.1e} (< 1e-10), {elapsed:.2f}s (< 5s)')
    assert ok


def _rhat(draws):
    s = S.potential_scale_reduction_init(draws.shape[1:])
    for x in draws:
        s, _ = S.potential_scale_reduction_step(s, x)
    return S.potential_scale_reduction_extract(s)


def test_07_rhat_calibration(acceptance_report):
    iid = normal_sample(key_from_seed(8), (10**4, 4))
    r_iid = float(_rhat(iid))
    n = 500
    identical = np.repeat(normal_sample(key_from_seed(9), (n, 1, 3)), 4, axis=1)
    r_same = _rhat(identical)
    same_ok = bool(np.all(r_same == math.sqrt((n - 1) / n)))
    mixed = normal_sample(key_from_seed(10), (1000, 4, 2))
    mixed[:, 0] += 0.1
    base = _rhat(mixed)
    affine_err = max(float(np.max(np.abs(_rhat(a * mixed + b) - base)))
                     for a, b in [(3.0, 1.0), (-0.01, 50.0), (1e3, -7.0)])
    ok = 0.99 <= r_iid <= 1.05 and same_ok and affine_err < 1e-12
    acceptance_report(
        7, 'R-hat calibration', ok,
        f'iid R-hat {r_iid:.4f} (in [0.99, 1.05]), identical chains exact '
        f'{same_ok}, affine max diff {affine_err:.1e} (< 1e-12)')
    assert ok


def _ess_fraction(x, max_lag=64):
    s = S.auto_covariance_init(x.shape[1:], max_lag)
    for row in x:
        s, _ = S.auto_covariance_step(s, row)
    ess = S.effective_sample_size(S.auto_covariance_extract(s), s.num_points)
    return float(ess[0]) / x.shape[0]


def test_08_ess_calibration(acceptance_report):
    n = 10**4
    ar = ar1(lambda shape: normal_sample(key_from_seed(11), shape), n, 0.5)
    ar_frac = _ess_fraction(ar)
    iid_frac = _ess_fraction(normal_sample(key_from_seed(12), (n, 1)))
    ok = abs(ar_frac - 1 / 3) <= 0.2 / 3 and 0.8 <= iid_frac <= 1.2
    acceptance_report(
        8, 'ESS calibration', ok,
        f'AR(1) ESS/n {ar_frac:.4f} (1/3 +- 20%), iid ESS/n {iid_frac:.4f} '
        f'(in [0.8, 1.2])')
    assert ok


def test_09_step_size_adaptation(acceptance_report):
    start = time.perf_counter()
    target = targets.standard_normal()
    init = (mcmc.hamiltonian_monte_carlo_init(
        normal_sample(key_from_seed(13), (16, 2)), target),
        optimize.adam_init(np.log(0.01)), key_from_seed(14))
    kernel = adaptive_hmc_kernel(target, 10, learning_rate=0.05)
    (_, log_step, _), (_, accepted, step_sizes, _) = trace(init, kernel, 3000)
    final_rate = accepted[-500:].mean()
    elapsed = time.perf_counter() - start
    ok = 0.75 <= final_rate <= 0.85 and elapsed < 60.0
    acceptance_report(
        9, 'step-size adaptation', ok,
        f'final-500 acceptance {final_rate:.3f} (in [0.75, 0.85]), step size '
        f'0.01 -> {math.exp(log_step.state):.3f}, {elapsed:.1f}s (< 60s)')
    assert ok


def test_10_reparameterization(acceptance_report):
    scale = np.array([1.0, 10.0])
    target = targets.diagonal_normal([0.0, 0.0], scale)
    whiten = Affine(0.0, scale)
    x0 = normal_sample(key_from_seed(15), (32, 2)) * scale
    reparam_fn, y0 = reparameterize_potential_fn(target, whiten, x0)

    y = normal_sample(key_from_seed(16), (1000, 2))
    h, _, (x, _, _) = reparam_fn(y)
    identity_err = float(np.max(np.abs(
        h - (target(x)[0] + whiten.forward_log_det_jacobian(y)))))

    eps, num_integrator_steps, num_steps, burn = 0.5, 10, 2000, 200
    _, (direct, _, _) = hmc_run(target, x0, eps, num_integrator_steps,
                                num_steps, seed=17)
    init = (mcmc.hamiltonian_monte_carlo_init(y0, reparam_fn),
            key_from_seed(18))
    _, (pushed, _, _) = trace(
        init, reparam_hmc_kernel(reparam_fn, eps, num_integrator_steps),
        num_steps)
    direct, pushed = direct[burn:], pushed[burn:]

    z = []
    for moment in (lambda d: d, lambda d: d * d):
        a, b = moment(direct), moment(pushed)
        diff = a.reshape(-1, 2).mean(axis=0) - b.reshape(-1, 2).mean(axis=0)
        combined = np.sqrt(pooled_se(a)**2 + pooled_se(b)**2)
        z.append(np.abs(diff) / combined)
    z = np.concatenate(z)
    worst_direct = float(np.min(chain_ess(direct)))
    worst_pushed = float(np.min(chain_ess(pushed)))
    gain = worst_pushed / worst_direct
    ok = identity_err < 1e-12 and np.all(z < 3.0) and gain >= 2.0
    acceptance_report(
        10, 'reparameterization consistency', ok,
        f'density identity err {identity_err:.1e} (< 1e-12), moment '
        f'|diff|/SE {np.max(z):.2f} (< 3), worst-coordinate ESS '
        f'{worst_direct:.0f} -> {worst_pushed:.0f} ({gain:.1f}x, >= 2x)')
    assert ok


def test_11_end_to_end_determinism(acceptance_report, tmp_path):
    modes = ('basic', 'thinned', 'reparam', 'adapt', 'streaming')
    identical = {}
    for mode in modes:
        outputs = []
        for attempt in range(2):
            out = tmp_path / mode / str(attempt)
            run(ExperimentConfig(mode=mode, out_dir=str(out)))
            outputs.append({p.name: p.read_bytes()
                            for p in sorted(out.iterdir())})
        identical[mode] = outputs[0] == outputs[1]
    ok = all(identical.values())
    acceptance_report(
        11, 'end-to-end determinism', ok,
        'default flags, two runs per mode: ' +
        ', '.join(f'{m} {"identical" if v else "DIFFERENT"}'
                  for m, v in identical.items()))
    assert ok
