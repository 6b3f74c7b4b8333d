"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one line per (kernel, size, backend) with the median wall time and
the speedup of the compiled backend, after checking both agree.
"""
import argparse
import statistics
import time

import numpy as np

from bilevel_bounds.kernels import available_backends


def _time(fn, repeat):
    out = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t)
    return statistics.median(out)


def _cases(rng):
    for n in (10, 1_000, 100_000):
        x = rng.standard_normal(n)
        yield f"upsilon n={n}", lambda k, x=x: k.upsilon(x, 1.0)
        yield f"upsilon_d2 n={n}", lambda k, x=x: k.upsilon_d2(x, 1.0)
    for T in (8, 256, 8192):
        x = rng.standard_normal(T)
        yield f"nc_chain T={T}", lambda k, x=x, T=T: k.nc_chain(x, 1.0, 1.0, T - 1)
    for d in (10, 100):
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        A = (q * np.linspace(1e-3, 1.0, d)) @ q.T
        c = rng.standard_normal(d)
        z0 = np.zeros(d)
        yield f"agd_quadratic d={d} K=500", lambda k, A=A, c=c, z0=z0: k.agd_quadratic(A, c, z0, 1.0, 1e-3, 500)
        yield f"gd_quadratic d={d} K=500", lambda k, A=A, c=c, z0=z0: k.gd_quadratic(A, c, z0, 1.0, 500)


def _result(r):
    return r[0] if isinstance(r, tuple) else r


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=15)
    args = ap.parse_args(argv)
    backends = available_backends()
    if "cython" not in backends:
        print("compiled backend not built; timing the pure-Python kernels only")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}{'python [s]':>14}{'cython [s]':>14}{'speedup':>10}")
    for name, fn in _cases(rng):
        py = _time(lambda: fn(backends["python"]), args.repeat)
        if "cython" in backends:
            a, b = _result(fn(backends["python"])), _result(fn(backends["cython"]))
            if not np.allclose(a, b, rtol=1e-10, atol=1e-12):
                raise SystemExit(f"{name}: backends disagree")
            cy = _time(lambda: fn(backends["cython"]), args.repeat)
            print(f"{name:<28}{py:>14.3e}{cy:>14.3e}{py / cy:>9.1f}x")
        else:
            print(f"{name:<28}{py:>14.3e}{'-':>14}{'-':>10}")


if __name__ == "__main__":
    main()
