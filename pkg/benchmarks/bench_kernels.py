"""Compare the numba and pure-numpy kernel paths.

Run:  python benchmarks/bench_kernels.py
Both paths are imported directly, so the HOLOLEARN_DISABLE_NUMBA flag does
not matter here.
"""
import time

import numpy as np

from hololearn import _kernels as K
from hololearn.multiindex import hyperbolic_cross
from hololearn.legendre import _flatten_indices


def best_of(fn, *args, repeat=5):
    fn(*args)  # warm up / compile
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, (20000, 4))
    Lam = hyperbolic_cross(16, 4)
    dims, exps, offsets = _flatten_indices(Lam)
    nmax = int(exps.max()) if exps.size else 0

    rows = []
    t_np = best_of(K._psi_table_numpy, X, nmax)
    t_nb = best_of(K.psi_table_jit, X, nmax)
    rows.append(("psi_table", t_np, t_nb))

    table = K._psi_table_numpy(X, nmax)
    t_np = best_of(K._design_numpy, table, dims, exps, offsets)
    t_nb = best_of(K.design_jit, table, dims, exps, offsets)
    rows.append((f"design ({len(Lam)} cols)", t_np, t_nb))

    n = 50_000
    theta, g = rng.standard_normal(n), rng.standard_normal(n)

    def adam(fn):
        th, m1, m2 = theta.copy(), np.zeros(n), np.zeros(n)
        for t in range(1, 201):
            fn(th, g, m1, m2, 1e-3, 0.9, 0.999, 1e-8, float(t))

    t_np = best_of(adam, K._adam_numpy)
    t_nb = best_of(adam, K.adam_jit)
    rows.append(("adam x200", t_np, t_nb))

    print(f"active backend: {K.BACKEND}")
    print(f"{'kernel':<22}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}")
    for name, a, b in rows:
        print(f"{name:<22}{a:>12.4f}{b:>12.4f}{a / b:>10.2f}")

    # both paths must agree
    assert np.allclose(K._psi_table_numpy(X, nmax), K.psi_table_jit(X, nmax), rtol=1e-13, atol=1e-13)


if __name__ == "__main__":
    main()
