"""Nested array trees: the state, gradient and side-information currency.

A tree is either a leaf (any non-container value, normally a NumPy array) or a
node. Nodes are ``tuple``, ``list``, ``dict``, ``NamedTuple`` instances, or
``None`` (an empty node, like ``()``). Children are ordered: positionally for
sequences, by field order for named tuples and by insertion order for dicts.
Flattening is depth-first in that order.

The leading axis of every leaf in a chain-batched tree indexes independent
chains.
"""

from __future__ import annotations

from typing import Any, Callable, NamedTuple

import numpy as np

from chainkit.errors import ShapeError, StructureMismatch

__all__ = [
    'TreeDef',
    'broadcast_structure',
    'is_leaf',
    'mask_zip',
    'num_chains',
    'select_chains',
    'stack_leaves',
    'tree_flatten',
    'tree_leaves',
    'tree_map',
    'tree_map_up_to',
    'tree_structure',
    'tree_unflatten',
    'tree_zip_with',
    'validate_batched',
    'zeros_like',
]

Tree = Any

_SEQ = 'seq'
_NAMED = 'named'
_DICT = 'dict'
_NONE = 'none'


def _is_namedtuple(x) -> bool:
    return isinstance(x, tuple) and hasattr(type(x), '_fields')


def is_leaf(x) -> bool:
    return not (x is None or isinstance(x, (tuple, list, dict)))


def _children(node) -> tuple[str, Any, tuple[Any, ...], list]:
    """Returns ``(kind, meta, keys, children)`` for a node."""
    if node is None:
        return _NONE, None, (), []
    if _is_namedtuple(node):
        return _NAMED, type(node), type(node)._fields, list(node)
    if isinstance(node, (tuple, list)):
        return _SEQ, type(node), tuple(range(len(node))), list(node)
    keys = tuple(node.keys())
    return _DICT, dict, keys, [node[k] for k in keys]


def _rebuild(kind: str, meta, keys, children):
    if kind == _NONE:
        return None
    if kind == _NAMED:
        return meta(*children)
    if kind == _SEQ:
        return meta(children)
    return dict(zip(keys, children))


def _path_str(path) -> str:
    return ''.join(f'[{p!r}]' for p in path) or '<root>'


def _match_children(node, other, path):
    """Children of ``other`` reordered to line up with those of ``node``."""
    kind, meta, keys, _ = _children(node)
    if is_leaf(other):
        raise StructureMismatch(
            f'expected a {kind} node at {_path_str(path)}, got a leaf')
    okind, ometa, okeys, ochildren = _children(other)
    if kind == _DICT and okind == _DICT:
        if set(keys) != set(okeys):
            raise StructureMismatch(
                f'dict keys differ at {_path_str(path)}: '
                f'{sorted(map(str, keys))} vs {sorted(map(str, okeys))}')
        return [other[k] for k in keys]
    if kind != okind or meta is not ometa or len(keys) != len(okeys):
        raise StructureMismatch(
            f'node mismatch at {_path_str(path)}: '
            f'{getattr(meta, "__name__", kind)}[{len(keys)}] vs '
            f'{getattr(ometa, "__name__", okind)}[{len(okeys)}]')
    return ochildren


def tree_map(f: Callable, tree: Tree, *rest: Tree) -> Tree:
    """Applies ``f`` leafwise to one or more structurally identical trees."""

    def go(t, others, path):
        if is_leaf(t):
            for o in others:
                if not is_leaf(o):
                    raise StructureMismatch(
                        f'expected a leaf at {_path_str(path)}, got a node')
            return f(t, *others)
        kind, meta, keys, children = _children(t)
        other_children = [_match_children(t, o, path) for o in others]
        out = [
            go(c, [oc[i] for oc in other_children], path + (k,))
            for i, (k, c) in enumerate(zip(keys, children))
        ]
        return _rebuild(kind, meta, keys, out)

    return go(tree, list(rest), ())


def tree_zip_with(f: Callable, a: Tree, b: Tree) -> Tree:
    """Leafwise ``f(a_leaf, b_leaf)``; names, arity and leaf shapes must agree."""

    def check(x, y):
        if np.shape(x) != np.shape(y):
            raise StructureMismatch(
                f'leaf shapes differ: {np.shape(x)} vs {np.shape(y)}')
        return f(x, y)

    return tree_map(check, a, b)


def tree_map_up_to(prefix: Tree, f: Callable, *trees: Tree) -> Tree:
    """Maps ``f`` over the leaves of ``prefix`` and matching subtrees of ``trees``.

    ``prefix`` must be a prefix of every tree: wherever ``prefix`` has a node,
    each tree has a node with the same children. Where ``prefix`` has a leaf,
    ``f`` receives the corresponding (possibly nested) subtrees.
    """

    def go(p, ts, path):
        if is_leaf(p):
            return f(*ts)
        kind, meta, keys, children = _children(p)
        matched = [_match_children(p, t, path) for t in ts]
        out = [
            go(c, [m[i] for m in matched], path + (k,))
            for i, (k, c) in enumerate(zip(keys, children))
        ]
        return _rebuild(kind, meta, keys, out)

    return go(prefix, list(trees), ())


class TreeDef(NamedTuple):
    """Hashable description of a tree's node layout (leaves excluded)."""

    kind: str
    meta: Any
    keys: tuple
    children: tuple

    @property
    def num_leaves(self) -> int:
        if self.kind == 'leaf':
            return 1
        return sum(c.num_leaves for c in self.children)


_LEAF = TreeDef('leaf', None, (), ())


def tree_structure(tree: Tree) -> TreeDef:
    if is_leaf(tree):
        return _LEAF
    kind, meta, keys, children = _children(tree)
    return TreeDef(kind, meta, keys, tuple(tree_structure(c) for c in children))


def tree_leaves(tree: Tree) -> list:
    if is_leaf(tree):
        return [tree]
    out = []
    for c in _children(tree)[3]:
        out.extend(tree_leaves(c))
    return out


def tree_flatten(tree: Tree) -> tuple[list, TreeDef]:
    return tree_leaves(tree), tree_structure(tree)


def tree_unflatten(treedef: TreeDef, leaves) -> Tree:
    it = iter(leaves)

    def go(d):
        if d.kind == 'leaf':
            return next(it)
        return _rebuild(d.kind, d.meta, d.keys, [go(c) for c in d.children])

    out = go(treedef)
    if next(it, _sentinel) is not _sentinel:
        raise StructureMismatch('too many leaves for tree definition')
    return out


_sentinel = object()


def _is_mask_leaf(m) -> bool:
    if isinstance(m, (bool, np.bool_)):
        return True
    if isinstance(m, np.ndarray) and m.dtype == bool and m.ndim == 0:
        return True
    if is_leaf(m):
        raise StructureMismatch(f'mask leaves must be booleans, got {m!r}')
    return False


def mask_zip(mask: Tree, tree: Tree) -> list[tuple[bool, Tree]]:
    """Pairs every maximal subtree of ``tree`` with its governing mask boolean.

    A boolean leaf in ``mask`` stands for the whole subtree beneath it, so a
    scalar mask yields one pair. The output covers each leaf of ``tree``
    exactly once, in flattening order.
    """
    out = []

    def go(m, t, path):
        if _is_mask_leaf(m):
            out.append((bool(m), t))
            return
        _, _, keys, mchildren = _children(m)
        tchildren = _match_children(m, t, path)
        for k, mc, tc in zip(keys, mchildren, tchildren):
            go(mc, tc, path + (k,))

    go(mask, tree, ())
    return out


def broadcast_structure(source: Tree, target: Tree) -> Tree:
    """Replicates a leaf ``source`` over ``target``'s structure.

    A node ``source`` must already match ``target`` and is returned unchanged.
    """
    if is_leaf(source):
        return tree_map(lambda _: source, target)
    tree_map(lambda *_: None, source, target)
    return source


def num_chains(tree: Tree) -> int:
    """The shared leading extent of all leaves."""
    leaves = tree_leaves(tree)
    if not leaves:
        raise ShapeError('cannot infer a chain count from an empty tree')
    first = np.shape(leaves[0])
    if not first:
        raise ShapeError('chain-batched leaves need a leading chain axis, '
                         'got a scalar leaf')
    return validate_batched(tree, first[0])


def validate_batched(tree: Tree, num: int) -> int:
    """Checks that every leaf's leading extent equals ``num``; returns it."""
    for leaf in tree_leaves(tree):
        shape = np.shape(leaf)
        if not shape:
            raise ShapeError('chain-batched leaves need a leading chain axis, '
                             'got a scalar leaf')
        if shape[0] != num:
            raise ShapeError(
                f'inconsistent chain axis: expected {num}, got leaf shape '
                f'{shape}')
    return num


def select_chains(is_selected: np.ndarray, on_true: Tree, on_false: Tree) -> Tree:
    """Chooses, per chain, leaves from ``on_true`` or ``on_false``."""
    is_selected = np.asarray(is_selected, dtype=bool)

    def choose(a, b):
        a = np.asarray(a)
        b = np.asarray(b)
        if a.shape != b.shape:
            raise StructureMismatch(f'leaf shapes differ: {a.shape} vs {b.shape}')
        if a.ndim == 0 or a.shape[0] != is_selected.shape[0]:
            raise ShapeError(
                f'leaf shape {a.shape} does not carry '
                f'{is_selected.shape[0]} chains')
        cond = is_selected.reshape(is_selected.shape + (1,) * (a.ndim - 1))
        return np.where(cond, a, b)

    return tree_map(choose, on_true, on_false)


def zeros_like(tree: Tree) -> Tree:
    return tree_map(np.zeros_like, tree)


def stack_leaves(trees: list[Tree]) -> Tree:
    """Stacks a list of identically structured trees along a new axis 0."""
    return tree_map(lambda *xs: np.stack(xs), *trees)
