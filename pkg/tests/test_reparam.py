import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainkit import mcmc, targets
from chainkit.errors import NonInvertible
from chainkit.potential import finite_diff_grad
from chainkit.reparam import (Affine, Compose, Exp, Identity, Softplus,
                              TreeDiffeomorphism, reparameterize_potential_fn)
from chainkit.rng import key_from_seed, normal_sample, split
from oracles import grad_rel_error


def gamma_target(shape=3.0, rate=2.0):
    """Independent Gamma(shape, rate) over positive ``[C, D]`` states."""

    def fn(x):
        with np.errstate(divide='ignore', invalid='ignore'):
            lp = np.sum((shape - 1.0) * np.log(x) - rate * x, axis=1)
        lp = np.where(np.all(x > 0, axis=1), lp, -np.inf)
        return lp, (shape - 1.0) / x - rate, ()

    return fn


def dict_target(x):
    a, b = x['a'], x['b']
    lp = -0.5 * np.sum(a * a, axis=1) - 0.5 * (b - 1.0)**2 * 4.0
    return lp, {'a': -a, 'b': -4.0 * (b - 1.0)}, ()


DIFFEOS = {
    'identity': Identity(),
    'affine': Affine(shift=[1.0, -2.0], scale=[0.5, -3.0]),
    'exp': Exp(),
    'softplus': Softplus(),
    'compose': Compose(Affine(shift=0.5, scale=2.0), Softplus()),
}


def test_identity_is_transparent():
    target = targets.banana(0.2)
    x0 = normal_sample(key_from_seed(0), (3, 2))
    fn, y0 = reparameterize_potential_fn(target, Identity(), x0)
    np.testing.assert_array_equal(y0, x0)
    lp, g, (x, extra, map_extra) = fn(x0)
    np.testing.assert_array_equal(lp, target(x0)[0])
    np.testing.assert_array_equal(g, target(x0)[1])
    np.testing.assert_array_equal(Identity().forward_log_det_jacobian(x0), 0.0)


def test_affine_constant_jacobian():
    target = targets.standard_normal()
    mu = 0.7
    fn, _ = reparameterize_potential_fn(target, Affine(mu, 2.0), np.zeros((1, 1)))
    y = normal_sample(key_from_seed(1), (5, 1))
    np.testing.assert_allclose(fn(y)[0], target(mu + 2.0 * y)[0] + np.log(2.0),
                               rtol=1e-14)


def test_whitening_gives_standard_normal():
    scale = np.array([1.0, 10.0])
    target = targets.diagonal_normal([0.0, 0.0], scale)
    fn, _ = reparameterize_potential_fn(target, Affine(0.0, scale),
                                        np.zeros((1, 2)))
    std = targets.standard_normal()
    k1, k2 = split(key_from_seed(2))
    y1 = normal_sample(k1, (100, 2))
    y2 = normal_sample(k2, (100, 2))
    diff = fn(y1)[0] - fn(y2)[0]
    expected = std(y1)[0] - std(y2)[0]
    np.testing.assert_allclose(diff, expected, rtol=0, atol=1e-10)


@pytest.mark.parametrize('name', sorted(DIFFEOS))
def test_density_identity(name):
    d = DIFFEOS[name]
    positive = name in ('exp', 'softplus', 'compose')
    target = gamma_target() if positive else targets.banana(0.1)
    y = normal_sample(key_from_seed(3), (50, 2))
    fn, _ = reparameterize_potential_fn(target, d, d.forward(y)[0])
    h, _, (x, _, _) = fn(y)
    assert x.tobytes() == d.forward(y)[0].tobytes()
    ldj = d.forward_log_det_jacobian(y)
    assert np.all(np.isfinite(ldj))
    np.testing.assert_allclose(h - target(x)[0], ldj, rtol=0, atol=1e-12)


@pytest.mark.parametrize('name', sorted(DIFFEOS))
def test_reparameterized_gradients(name):
    d = DIFFEOS[name]
    positive = name in ('exp', 'softplus', 'compose')
    target = gamma_target() if positive else targets.banana(0.3)
    y = normal_sample(key_from_seed(4), (100, 2))
    fn, _ = reparameterize_potential_fn(target, d, d.forward(y)[0])
    assert grad_rel_error(fn, y) < 1e-4


def test_tree_diffeomorphism_gradients_and_extras():
    maps = {'a': Affine(1.0, 2.0), 'b': Softplus()}
    d = TreeDiffeomorphism(maps)
    y = {'a': normal_sample(key_from_seed(5), (100, 2)),
         'b': normal_sample(key_from_seed(6), (100,))}
    x0, extra = d.forward(y)
    assert extra == {'a': (), 'b': ()}
    fn, y0 = reparameterize_potential_fn(dict_target, d, x0)
    np.testing.assert_allclose(y0['a'], y['a'], rtol=1e-12)
    lp, grad, _ = fn(y)
    fd = finite_diff_grad(fn, y)
    for k in ('a', 'b'):
        g = grad[k].reshape(100, -1)
        f = fd[k].reshape(100, -1)
        assert np.max(np.abs(g - f) / np.maximum(np.abs(f), 1e-3)) < 1e-4
    expected = (maps['a'].forward_log_det_jacobian(y['a']) +
                maps['b'].forward_log_det_jacobian(y['b']))
    np.testing.assert_allclose(d.forward_log_det_jacobian(y), expected)


def test_compose_extras_and_ldj():
    d = Compose(Affine(0.0, 3.0), Exp())
    y = np.array([[0.2, -0.1]])
    x, extra = d.forward(y)
    assert extra == ((), ())
    np.testing.assert_allclose(x, 3.0 * np.exp(y))
    np.testing.assert_allclose(d.forward_log_det_jacobian(y),
                               [2 * np.log(3.0) + 0.1])


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(sorted(DIFFEOS)), st.integers(0, 2**32 - 1))
def test_round_trip(name, seed):
    d = DIFFEOS[name]
    y = 3.0 * normal_sample(key_from_seed(seed), (4, 2))
    back = d.inverse(d.forward(y)[0])
    np.testing.assert_allclose(back, y, rtol=1e-10, atol=1e-10)
    assert np.all(np.isfinite(d.forward_log_det_jacobian(y)))


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(sorted(DIFFEOS)), st.integers(0, 2**32 - 1))
def test_ldj_matches_jacobian(name, seed):
    # Elementwise maps: log|det J| is the sum of log|dx_i/dy_i|.
    d = DIFFEOS[name]
    y = normal_sample(key_from_seed(seed), (3, 2))
    h = 1e-6
    deriv = (d.forward(y + h)[0] - d.forward(y - h)[0]) / (2 * h)
    np.testing.assert_allclose(d.forward_log_det_jacobian(y),
                               np.sum(np.log(np.abs(deriv)), axis=1),
                               rtol=1e-6, atol=1e-8)


def test_non_invertible_detected():
    with pytest.raises(NonInvertible):
        reparameterize_potential_fn(gamma_target(), Exp(),
                                    np.array([[-1.0, 2.0]]))

    class Broken(Affine):
        def _inv(self, x):
            return x

    with pytest.raises(NonInvertible):
        reparameterize_potential_fn(targets.standard_normal(),
                                    Broken(1.0, 2.0), np.ones((1, 2)))
    # Opting out skips the check.
    reparameterize_potential_fn(targets.standard_normal(), Broken(1.0, 2.0),
                                np.ones((1, 2)), check_invertible=False)


def test_affine_rejects_zero_scale():
    with pytest.raises(ValueError):
        Affine(0.0, [1.0, 0.0])


def test_per_step_diffeomorphism_inside_kernel():
    target = targets.standard_normal()

    def kernel(x, key, t):
        d = Affine(shift=0.1 * t, scale=1.0 + 0.1 * t)
        fn, y = reparameterize_potential_fn(target, d, x)
        s = mcmc.hamiltonian_monte_carlo_init(y, fn)
        k1, key = split(key)
        s, _ = mcmc.hamiltonian_monte_carlo_step(s, fn, 0.5, 3, k1)
        return (s.state_extra[0], key, t + 1), s.state_extra[0]

    state = (np.zeros((2, 1)), key_from_seed(0), 0)
    for _ in range(5):
        state, x = kernel(*state)
    assert x.shape == (2, 1) and np.all(np.isfinite(x))
