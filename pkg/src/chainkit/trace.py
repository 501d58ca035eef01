"""The ``trace`` combinator: iterate a transition kernel and stack its side outputs."""

from __future__ import annotations

from typing import Any, Callable, NamedTuple

import numpy as np

from chainkit import tree as tree_lib
from chainkit.errors import StructureMismatch

__all__ = ['TraceResult', 'call_transition_operator', 'trace']


class TraceResult(NamedTuple):
    """Unpacks like the ``(state, extra)`` pair any kernel returns."""

    final_state: Any
    traced: Any


def call_transition_operator(fn: Callable, state) -> tuple[Any, Any]:
    """Calls ``fn(*state)`` for a plain tuple state and ``fn(state)`` otherwise.

    The splat lets kernels take their state pieces as separate arguments, e.g.
    ``kernel(hmc_state, key)`` for the state ``(hmc_state, key)``.
    """
    if isinstance(state, tuple) and not hasattr(type(state), '_fields'):
        out = fn(*state)
    else:
        out = fn(state)
    if not isinstance(out, tuple) or len(out) != 2:
        raise TypeError('a transition kernel must return (state, extra)')
    return out


def _aux_layout(aux):
    leaves, treedef = tree_lib.tree_flatten(aux)
    return treedef, [np.shape(leaf) for leaf in leaves]


def trace(state, fn: Callable, num_steps: int, trace_mask=True) -> TraceResult:
    """Applies ``fn`` ``num_steps`` times, recording its side outputs.

    Subtrees of the side output whose ``trace_mask`` entry is True gain a new
    leading time axis of extent ``num_steps``. Subtrees masked False keep only
    the value from the last step, so they cost no history memory; a scalar
    ``False`` mask therefore turns ``trace`` itself into a kernel that runs
    ``num_steps`` inner steps, which is how thinning is expressed.

    History buffers are allocated after the first step. The side output must
    keep the structure and leaf shapes of that first step.

    Args:
      state: Initial state.
      fn: Transition kernel ``state -> (state, extra)``. A plain tuple state is
        splatted into the call.
      num_steps: Number of kernel applications, at least 1.
      trace_mask: Boolean prefix tree of the side output.

    Returns:
      ``TraceResult(final_state, traced)``.
    """
    if num_steps < 1:
        raise ValueError(f'num_steps must be >= 1, got {num_steps}')

    state, aux = call_transition_operator(fn, state)
    pairs = tree_lib.mask_zip(trace_mask, aux)
    layout = _aux_layout(aux)
    buffers = []
    for is_traced, sub in pairs:
        if is_traced:
            bufs = []
            for leaf in tree_lib.tree_leaves(sub):
                leaf = np.asarray(leaf)
                buf = np.empty((num_steps,) + leaf.shape, dtype=leaf.dtype)
                buf[0] = leaf
                bufs.append(buf)
            buffers.append(bufs)
        else:
            buffers.append(None)

    for step in range(1, num_steps):
        state, aux = call_transition_operator(fn, state)
        if _aux_layout(aux) != layout:
            raise StructureMismatch(
                f'side output at step {step} changed structure or shape '
                'relative to step 0')
        pairs_now = tree_lib.mask_zip(trace_mask, aux)
        for bufs, (is_traced, sub) in zip(buffers, pairs_now):
            if is_traced:
                for buf, leaf in zip(bufs, tree_lib.tree_leaves(sub)):
                    buf[step] = leaf
        pairs = pairs_now

    filled = iter(zip(pairs, buffers))

    def assemble(_mask_leaf, _sub):
        (is_traced, sub), bufs = next(filled)
        if is_traced:
            return tree_lib.tree_unflatten(tree_lib.tree_structure(sub), bufs)
        return sub

    traced = tree_lib.tree_map_up_to(trace_mask, assemble, trace_mask, aux)
    return TraceResult(state, traced)
