"""Splittable, counter-based random keys.

A key is 128 bits: two words key the Philox-4x32-10 bijection and two select a
stream. Draws with a key encrypt the counters ``(i, 0, stream)`` for
``i = 0, 1, ...``; splitting encrypts ``(j, 0xFFFFFFFF, stream)`` and uses the
four output words as child ``j``. Keys are never mutated.

Uniforms keep the top 52 bits of each 64-bit output word and sit at bin
centres, so they lie in the open interval (0, 1). Normals use the Box-Muller
transform on consecutive uniform pairs ``(u1, u2)``, emitting
``r cos(2 pi u2)`` then ``r sin(2 pi u2)`` with ``r = sqrt(-2 log u1)``.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from chainkit import kernels

__all__ = [
    'RngKey',
    'key_from_seed',
    'normal_sample',
    'split',
    'uniform_sample',
]

_DRAW_DOMAIN = 0
_SPLIT_DOMAIN = 0xFFFFFFFF
_SEED_DOMAIN = 0xFFFFFFFE
_MASK32 = 0xFFFFFFFF


@dataclasses.dataclass(frozen=True)
class RngKey:
    """Immutable 128-bit key, stored as four 32-bit words."""

    words: tuple[int, int, int, int]

    def __post_init__(self):
        if len(self.words) != 4 or any(
                not 0 <= int(w) <= _MASK32 for w in self.words):
            raise ValueError(f'key needs four 32-bit words, got {self.words}')

    @property
    def bits(self) -> int:
        out = 0
        for w in self.words:
            out = (out << 32) | int(w)
        return out

    def __repr__(self):
        return f'RngKey(0x{self.bits:032x})'


def _blocks(key: RngKey, domain: int, n: int) -> np.ndarray:
    if n >= 1 << 32:
        raise ValueError(f'cannot draw {n} blocks from one key')
    k0, k1, s0, s1 = key.words
    return kernels.philox_blocks(k0, k1, domain, s0, s1, 0, n)


def key_from_seed(seed: int) -> RngKey:
    """Deterministic key for a non-negative integer seed below 2**64."""
    seed = int(seed)
    if not 0 <= seed < 1 << 64:
        raise ValueError(f'seed must be in [0, 2**64), got {seed}')
    block = kernels.philox_blocks(seed & _MASK32, seed >> 32, _SEED_DOMAIN,
                                  0, 0, 0, 1)[0]
    return RngKey(tuple(int(w) for w in block))


def split(key: RngKey, num: int = 2) -> tuple[RngKey, ...]:
    """Derives ``num`` child keys; the same key always yields the same children."""
    if num < 1:
        raise ValueError(f'num must be positive, got {num}')
    blocks = _blocks(key, _SPLIT_DOMAIN, num)
    return tuple(RngKey(tuple(int(w) for w in b)) for b in blocks)


def _uniform_flat(key: RngKey, size: int) -> np.ndarray:
    blocks = _blocks(key, _DRAW_DOMAIN, (size + 1) // 2)
    words = np.empty(2 * blocks.shape[0], dtype=np.uint64)
    words[0::2] = (blocks[:, 0] << np.uint64(32)) | blocks[:, 1]
    words[1::2] = (blocks[:, 2] << np.uint64(32)) | blocks[:, 3]
    mantissa = (words[:size] >> np.uint64(12)).astype(np.float64)
    return (mantissa + 0.5) * 2.0**-52


def _shape(shape) -> tuple[int, ...]:
    if isinstance(shape, (int, np.integer)):
        return (int(shape),)
    return tuple(int(s) for s in shape)


def uniform_sample(key: RngKey, shape=()) -> np.ndarray:
    """I.i.d. Uniform(0, 1) draws; never exactly 0 or 1."""
    shape = _shape(shape)
    return _uniform_flat(key, math.prod(shape)).reshape(shape)


def normal_sample(key: RngKey, shape=()) -> np.ndarray:
    """I.i.d. standard normal draws."""
    shape = _shape(shape)
    size = math.prod(shape)
    num_pairs = (size + 1) // 2
    u = _uniform_flat(key, 2 * num_pairs)
    radius = np.sqrt(-2.0 * np.log(u[0::2]))
    angle = 2.0 * np.pi * u[1::2]
    z = np.empty(2 * num_pairs)
    z[0::2] = radius * np.cos(angle)
    z[1::2] = radius * np.sin(angle)
    return z[:size].reshape(shape)
