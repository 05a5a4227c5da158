"""Compare the compiled and pure-python dual solvers on one problem family.

Run from the repository root:

    python benchmarks/benchmark_smo.py [--sizes 96,192,384] [--reps 3]

Both backends run the same sequential optimization, so iteration counts
and objectives must agree exactly; only wall-clock time differs.
"""

import argparse
import time

import numpy as np

from sparsetouch import _smo_py, svr

try:
    from sparsetouch import _smo
except ImportError:
    _smo = None


def make_problem(rng, l):
    X = rng.normal(size=(l, 6))
    y = np.sin(X[:, 0]) + 0.4 * X[:, 1] ** 2 + 0.1 * rng.normal(size=l)
    K = svr.rbf_kernel_matrix(X, X, 0.3)
    return K, y


def run(solver, K, y, reps):
    best = np.inf
    res = None
    for _ in range(reps):
        t0 = time.perf_counter()
        res = solver.solve_svr_smo(K, y, 10.0, 0.05, tol=1e-5, max_pairs=2_000_000)
        best = min(best, time.perf_counter() - t0)
    return best, res


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="96,192,384",
                        help="comma-separated training-set sizes")
    parser.add_argument("--reps", type=int, default=3,
                        help="repetitions per size (best time kept)")
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    if _smo is None:
        print("compiled extension not built; only the python backend will run")
    print(f"{'l':>6} {'pairs':>9} {'python [s]':>11} {'compiled [s]':>13} {'speedup':>8}")
    rng = np.random.default_rng(0)
    for l in sizes:
        K, y = make_problem(rng, l)
        t_py, res_py = run(_smo_py, K, y, args.reps)
        if _smo is None:
            print(f"{l:>6} {res_py.iterations:>9} {t_py:>11.3f} {'-':>13} {'-':>8}")
            continue
        t_c, res_c = run(_smo, K, y, args.reps)
        if (res_py.iterations != res_c.iterations
                or res_py.objective != res_c.objective):
            raise SystemExit(f"backend mismatch at l={l}: "
                             f"{res_py.iterations}/{res_py.objective!r} vs "
                             f"{res_c.iterations}/{res_c.objective!r}")
        print(f"{l:>6} {res_c.iterations:>9} {t_py:>11.3f} {t_c:>13.3f} "
              f"{t_py / t_c:>7.1f}x")


if __name__ == "__main__":
    main()
