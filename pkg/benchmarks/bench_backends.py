"""Compare the compiled and pure-Python hot loops.

    python3 benchmarks/bench_backends.py [--repeat 5]

Times the EGD solver loop and the quadruple-subsampling sums on inputs of the
size the experiment harness produces, checks both backends agree, and prints
a table of best-of-``repeat`` wall times.
"""

import argparse
import timeit

import numpy as np

from multimean import _accel_py
from multimean.kernels import draw_distinct_quadruples

try:
    from multimean import _accel
except ImportError:  # extension not built
    _accel = None


def egd_case(b, rng):
    x = rng.standard_normal((b, 3 * b))
    a = 2.0 * x @ x.T / x.shape[1]
    lin = rng.uniform(0.0, 1.0, b)
    free = np.ones(b, dtype=bool)
    scale = float(np.max(np.diag(a)))
    return a, lin, free, scale


def run_egd(mod, case, t_max):
    a, lin, free, scale = case
    w = np.full(a.shape[0], 1.0 / a.shape[0])
    # tol tiny so both backends run the full t_max iterations
    mod.egd_loop(a, lin, w, free, 50.0, a.shape[0], t_max, 1e-300, 0.0, scale, 50.0)
    return w


def sub_case(n, r, rng):
    x = rng.standard_normal((n, 2))
    k = np.exp(-np.sum((x[:, None] - x[None]) ** 2, axis=-1) / 2.0)
    return np.ascontiguousarray(k), np.ascontiguousarray(draw_distinct_quadruples(n, r, rng), dtype=np.int64)


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    rng = np.random.default_rng(0)
    mods = [("python", _accel_py)] + ([("cython", _accel)] if _accel is not None else [])
    if _accel is None:
        print("compiled extension not available; timing the fallback only")

    print(f"{'kernel':<32}{'backend':<10}{'seconds':>12}{'speedup':>10}")
    for b, t_max in ((20, 500), (50, 500), (200, 200)):
        case = egd_case(b, rng)
        ref = run_egd(_accel_py, case, t_max)
        times = {}
        for name, mod in mods:
            np.testing.assert_allclose(run_egd(mod, case, t_max), ref, rtol=1e-9, atol=1e-12)
            times[name] = best(lambda: run_egd(mod, case, t_max), args.repeat)
        for name in times:
            print(f"{f'egd_loop B={b} t={t_max}':<32}{name:<10}{times[name]:>12.5f}{times['python'] / times[name]:>9.1f}x")

    for n, r in ((50, 100), (300, 10000), (1000, 100000)):
        k, idx = sub_case(n, r, rng)
        ref = _accel_py.subsample_terms(k, idx)
        times = {}
        for name, mod in mods:
            np.testing.assert_allclose(mod.subsample_terms(k, idx), ref, rtol=1e-10)
            times[name] = best(lambda: mod.subsample_terms(k, idx), args.repeat)
        for name in times:
            print(f"{f'subsample_terms N={n} r={r}':<32}{name:<10}{times[name]:>12.5f}{times['python'] / times[name]:>9.1f}x")


if __name__ == "__main__":
    main()
