"""Times the compiled kernels against their pure-NumPy fallbacks.

Run with ``python benchmarks/bench_kernels.py``. Each row reports the best of
several repeats and checks that both paths agree.
"""

import argparse
import timeit

import numpy as np

from chainkit.kernels import numpy_impl

try:
    from chainkit.kernels import numba_impl
except ImportError:
    numba_impl = None


def philox_case(impl, n):
    return lambda: impl.philox_blocks(0x1234, 0x5678, 0, 1, 2, 0, n)


def autocov_case(impl, num_updates, max_lag, dim):
    ys = np.random.default_rng(0).standard_normal((num_updates, dim))

    def go():
        prod = np.zeros((max_lag + 1, dim))
        ring = np.zeros((max_lag, dim))
        head = np.zeros((max_lag, dim))
        total = np.zeros(dim)
        for n, y in enumerate(ys):
            impl.autocov_update(prod, ring, head, total, n, y)
        return prod

    return go


def geyer_case(impl, max_lag, num_series):
    lags = np.arange(max_lag + 1)[:, None]
    rho = np.ascontiguousarray(
        0.95**lags * np.cos(lags * np.linspace(0.0, 0.3, num_series)))
    return lambda: impl.geyer_tau(rho)


CASES = {
    'philox_blocks n=1e6': lambda impl: philox_case(impl, 10**6),
    'autocov_update 2000 x K=64 x D=8': lambda impl: autocov_case(impl, 2000,
                                                                  64, 8),
    'geyer_tau K=256 x 1000 series': lambda impl: geyer_case(impl, 256, 1000),
}


def best_of(fn, repeat):
    fn()  # compile / warm caches
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument('--repeat', type=int, default=5)
    args = parser.parse_args()
    if numba_impl is None:
        print('numba is not installed; only the NumPy path is available')
    print(f'{"case":36s} {"numpy":>10s} {"numba":>10s} {"speedup":>8s}')
    for name, make in CASES.items():
        ref = make(numpy_impl)
        t_np = best_of(ref, args.repeat)
        if numba_impl is None:
            print(f'{name:36s} {t_np * 1e3:9.2f}ms')
            continue
        fast = make(numba_impl)
        np.testing.assert_allclose(fast(), ref(), rtol=1e-12)
        t_nb = best_of(fast, args.repeat)
        print(f'{name:36s} {t_np * 1e3:9.2f}ms {t_nb * 1e3:9.2f}ms '
              f'{t_np / t_nb:7.1f}x')


if __name__ == '__main__':
    main()
