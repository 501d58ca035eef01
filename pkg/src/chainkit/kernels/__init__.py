"""Hot inner loops, numba-compiled when available.

Set ``CHAINKIT_DISABLE_NUMBA=1`` to force the pure-NumPy path. Both paths
produce bitwise-identical results for the integer kernels; the floating point
kernels agree up to summation order.
"""

import os

from chainkit.kernels import numpy_impl

__all__ = ['BACKEND', 'autocov_update', 'geyer_tau', 'philox_blocks']


def _numba_wanted() -> bool:
    return os.environ.get('CHAINKIT_DISABLE_NUMBA', '').lower() not in (
        '1', 'true', 'yes')


if _numba_wanted():
    try:
        from chainkit.kernels import numba_impl as _impl
        BACKEND = 'numba'
    except ImportError:
        _impl = numpy_impl
        BACKEND = 'numpy'
else:
    _impl = numpy_impl
    BACKEND = 'numpy'

philox_blocks = _impl.philox_blocks
autocov_update = _impl.autocov_update
geyer_tau = _impl.geyer_tau
