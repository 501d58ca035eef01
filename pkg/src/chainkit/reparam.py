"""Reparameterizing potentials through diffeomorphisms.

A diffeomorphism maps the reparameterized space to the original space. Since
there is no autodiff, each one supplies its own inverse, forward
log-determinant Jacobian, vector-Jacobian product and the gradient of the
log-determinant. The bundled maps are elementwise, so their log-determinants
are summed over every axis past the leading chain axis.
"""

from __future__ import annotations

from typing import Any

import numpy as np

from chainkit import tree as tree_lib
from chainkit.errors import NonInvertible
from chainkit.potential import PotentialFn, call_potential_fn

__all__ = [
    'Affine',
    'Compose',
    'Diffeomorphism',
    'Exp',
    'Identity',
    'Softplus',
    'TreeDiffeomorphism',
    'reparameterize_potential_fn',
]

ROUND_TRIP_RTOL = 1e-10


def _per_chain_sum(x: np.ndarray) -> np.ndarray:
    return np.sum(x, axis=tuple(range(1, x.ndim)))


class Diffeomorphism:
    """Interface for an invertible map ``g`` from reparameterized to original space."""

    def forward(self, y) -> tuple[Any, Any]:
        """Returns ``(g(y), extra)``."""
        raise NotImplementedError

    def inverse(self, x):
        raise NotImplementedError

    def forward_log_det_jacobian(self, y) -> np.ndarray:
        """``log |det J_g(y)|`` per chain."""
        raise NotImplementedError

    def forward_vjp(self, y, cotangent):
        """``J_g(y)^T cotangent``, shaped like ``y``."""
        raise NotImplementedError

    def forward_log_det_jacobian_grad(self, y):
        """Gradient of :meth:`forward_log_det_jacobian` with respect to ``y``."""
        raise NotImplementedError


class _Elementwise(Diffeomorphism):
    """A map acting independently on every element of a single array."""

    def _fwd(self, y):
        raise NotImplementedError

    def _inv(self, x):
        raise NotImplementedError

    def _log_deriv(self, y):
        raise NotImplementedError

    def _deriv(self, y):
        raise NotImplementedError

    def _log_deriv_grad(self, y):
        raise NotImplementedError

    def forward(self, y):
        return self._fwd(np.asarray(y, dtype=np.float64)), ()

    def inverse(self, x):
        return self._inv(np.asarray(x, dtype=np.float64))

    def forward_log_det_jacobian(self, y):
        y = np.asarray(y, dtype=np.float64)
        return _per_chain_sum(np.broadcast_to(self._log_deriv(y), y.shape))

    def forward_vjp(self, y, cotangent):
        return np.asarray(cotangent) * self._deriv(np.asarray(y, np.float64))

    def forward_log_det_jacobian_grad(self, y):
        y = np.asarray(y, dtype=np.float64)
        return np.broadcast_to(self._log_deriv_grad(y), y.shape).copy()


class Identity(_Elementwise):

    def _fwd(self, y):
        return y

    def _inv(self, x):
        return x

    def _log_deriv(self, y):
        return np.zeros_like(y)

    def _deriv(self, y):
        return np.ones_like(y)

    def _log_deriv_grad(self, y):
        return np.zeros_like(y)


class Affine(_Elementwise):
    """``x = shift + scale * y`` elementwise; ``scale`` must be nonzero."""

    def __init__(self, shift=0.0, scale=1.0):
        self.shift = np.asarray(shift, dtype=np.float64)
        self.scale = np.asarray(scale, dtype=np.float64)
        if np.any(self.scale == 0):
            raise ValueError('Affine scale must be nonzero')

    def _fwd(self, y):
        return self.shift + self.scale * y

    def _inv(self, x):
        return (x - self.shift) / self.scale

    def _log_deriv(self, y):
        return np.log(np.abs(self.scale)) + np.zeros_like(y)

    def _deriv(self, y):
        return self.scale + np.zeros_like(y)

    def _log_deriv_grad(self, y):
        return np.zeros_like(y)


class Exp(_Elementwise):
    """``x = exp(y)``; maps onto the positive reals."""

    def _fwd(self, y):
        return np.exp(y)

    def _inv(self, x):
        with np.errstate(divide='ignore', invalid='ignore'):
            return np.log(x)

    def _log_deriv(self, y):
        return y

    def _deriv(self, y):
        return np.exp(y)

    def _log_deriv_grad(self, y):
        return np.ones_like(y)


class Softplus(_Elementwise):
    """``x = log(1 + exp(y))``; maps onto the positive reals."""

    def _fwd(self, y):
        return np.logaddexp(0.0, y)

    def _inv(self, x):
        with np.errstate(divide='ignore', invalid='ignore'):
            return x + np.log(-np.expm1(-x))

    def _log_deriv(self, y):
        # log(sigmoid(y))
        return -np.logaddexp(0.0, -y)

    def _deriv(self, y):
        return np.exp(-np.logaddexp(0.0, -y))

    def _log_deriv_grad(self, y):
        # 1 - sigmoid(y)
        return np.exp(-np.logaddexp(0.0, y))


class TreeDiffeomorphism(Diffeomorphism):
    """Applies a tree of diffeomorphisms to the matching subtrees of the state.

    The tree of maps is a prefix of the state tree. Extras come back in the
    shape of that prefix.
    """

    def __init__(self, maps):
        self.maps = maps

    def _map(self, f, *trees):
        return tree_lib.tree_map_up_to(self.maps, f, self.maps, *trees)

    def forward(self, y):
        pairs = self._map(lambda d, sub: d.forward(sub), y)
        x = tree_lib.tree_map_up_to(self.maps, lambda p: p[0], pairs)
        extra = tree_lib.tree_map_up_to(self.maps, lambda p: p[1], pairs)
        return x, extra

    def inverse(self, x):
        return self._map(lambda d, sub: d.inverse(sub), x)

    def forward_log_det_jacobian(self, y):
        parts = self._map(lambda d, sub: d.forward_log_det_jacobian(sub), y)
        return sum(tree_lib.tree_leaves(parts))

    def forward_vjp(self, y, cotangent):
        return self._map(lambda d, sub, ct: d.forward_vjp(sub, ct), y,
                         cotangent)

    def forward_log_det_jacobian_grad(self, y):
        return self._map(lambda d, sub: d.forward_log_det_jacobian_grad(sub),
                         y)


class Compose(Diffeomorphism):
    """``outer(inner(y))``; extras are returned as ``(inner_extra, outer_extra)``."""

    def __init__(self, outer: Diffeomorphism, inner: Diffeomorphism):
        self.outer = outer
        self.inner = inner

    def forward(self, y):
        z, inner_extra = self.inner.forward(y)
        x, outer_extra = self.outer.forward(z)
        return x, (inner_extra, outer_extra)

    def inverse(self, x):
        return self.inner.inverse(self.outer.inverse(x))

    def forward_log_det_jacobian(self, y):
        z, _ = self.inner.forward(y)
        return (self.inner.forward_log_det_jacobian(y) +
                self.outer.forward_log_det_jacobian(z))

    def forward_vjp(self, y, cotangent):
        z, _ = self.inner.forward(y)
        return self.inner.forward_vjp(y, self.outer.forward_vjp(z, cotangent))

    def forward_log_det_jacobian_grad(self, y):
        z, _ = self.inner.forward(y)
        outer_grad = self.outer.forward_log_det_jacobian_grad(z)
        return tree_lib.tree_map(
            np.add, self.inner.forward_log_det_jacobian_grad(y),
            self.inner.forward_vjp(y, outer_grad))


def _round_trips(x0, x1) -> bool:
    ok = True

    def check(a, b):
        nonlocal ok
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if not (np.all(np.isfinite(b)) and np.all(
                np.abs(a - b) <= ROUND_TRIP_RTOL * np.maximum(np.abs(a), 1.0))):
            ok = False

    tree_lib.tree_map(check, x0, x1)
    return ok


def reparameterize_potential_fn(potential_fn: PotentialFn,
                                diffeomorphism: Diffeomorphism,
                                init_state,
                                check_invertible: bool = True):
    """Moves a potential into the space of a diffeomorphism's input.

    The new potential is ``h(y) = log_pi(g(y)) + log|det J_g(y)|`` with its
    gradient assembled by the chain rule. Its side output is
    ``(g(y), potential_extra, diffeomorphism_extra)`` so that original-space
    states travel with the chain.

    Args:
      potential_fn: Potential in the original space.
      diffeomorphism: Map ``g`` from the new space to the original one.
      init_state: A point in the original space.
      check_invertible: Verify that ``g(g^{-1}(init_state))`` recovers
        ``init_state``.

    Returns:
      ``(reparameterized_potential_fn, reparameterized_init_state)``.

    Raises:
      NonInvertible: if the round trip misses by more than 1e-10 relative.
    """
    with np.errstate(invalid='ignore', divide='ignore', over='ignore'):
        init_y = diffeomorphism.inverse(init_state)
        if check_invertible:
            round_trip, _ = diffeomorphism.forward(init_y)
            finite = all(np.all(np.isfinite(leaf))
                         for leaf in tree_lib.tree_leaves(init_y))
            if not finite or not _round_trips(init_state, round_trip):
                raise NonInvertible(
                    'diffeomorphism does not round-trip the initial state')

    def reparam_fn(y):
        x, map_extra = diffeomorphism.forward(y)
        log_prob, grad, target_extra = call_potential_fn(potential_fn, x)
        ldj = diffeomorphism.forward_log_det_jacobian(y)
        grad_y = tree_lib.tree_map(
            np.add, diffeomorphism.forward_vjp(y, grad),
            diffeomorphism.forward_log_det_jacobian_grad(y))
        return log_prob + ldj, grad_y, (x, target_extra, map_extra)

    return reparam_fn, init_y
