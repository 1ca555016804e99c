"""Compare the numba kernels with their pure-numpy fallbacks.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 20] [--fits 3]

Kernel timings call both flavours directly in one process. End-to-end fit
timings run SLOBE and ABSLOPE in subprocesses, once with the default backend
and once with ``ABSLOPE_DISABLE_NUMBA=1``.
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from abslope import _kernels as K
from abslope._accel import USE_NUMBA
from abslope.sampler import precision_matrix


def best_of(fn, repeat):
    fn()  # compile / warm caches
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def kernel_cases(rng):
    p = 100
    v = rng.normal(0, 3, p)
    lam = np.sort(rng.random(p) * 3)[::-1]

    n = 100
    A = rng.standard_normal((n, p)) / np.sqrt(n)
    y = A[:, :10] @ np.full(10, 9.0) + rng.standard_normal(n)
    evals, Q = np.linalg.eigh(A.T @ A)
    admm_args = (np.ascontiguousarray(Q), np.clip(evals, 0, None), A.T @ y, lam, np.zeros(p),
                 1.0, 5000, 1e-6 * np.sqrt(p))

    X = rng.standard_normal((n, p)) / np.sqrt(n)
    mask = rng.random((n, p)) < 0.1
    S = precision_matrix(np.eye(p) + 0.1)
    noise = np.where(mask, rng.standard_normal((n, p)), 0.0)

    def imp(fn):
        V = np.zeros((p, p))
        return fn(X, mask, y, rng.standard_normal(p), 1.0, np.zeros(p), S, noise, True, V, True)

    return {
        "prox_sorted_l1 (p=100)": (lambda: K._prox_sorted_l1_py(v, lam),
                                   lambda: K._prox_sorted_l1_nb(v, lam)),
        "admm solve (n=p=100)": (lambda: K._admm_numpy(*admm_args),
                                 lambda: K._admm_nb(*admm_args)),
        "impute rows (100x100, 10% missing)": (lambda: imp(K._impute_rows_numpy),
                                               lambda: imp(K._impute_rows_nb)),
    }


_FIT = """
import json, time, numpy as np
from abslope import Dataset, Hyperparams, fit_abslope, fit_slobe, backend_name
from abslope.simulate import ampute, generate_design, generate_response
def data(seed):
    rng = np.random.default_rng(seed)
    X = generate_design(100, 100, 0.0, rng)
    y, _ = generate_response(X, 10, 3.0, 1.0, rng)
    m = ampute(X, 0.1, "mcar", rng)
    return Dataset.from_arrays(np.where(m, np.nan, X), y, mask=m)
fit_slobe(data(0)); fit_abslope(data(0), Hyperparams(max_iter=30))  # compile
out = {"backend": backend_name()}
for name, fn in (("slobe", fit_slobe), ("abslope", fit_abslope)):
    t = time.perf_counter()
    for s in range(1, FITS + 1):
        fn(data(s), seed=s, record_trace=False)
    out[name] = (time.perf_counter() - t) / FITS
print(json.dumps(out))
"""


def fit_timings(fits):
    rows = []
    for flag in ("0", "1"):
        env = dict(os.environ, ABSLOPE_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", _FIT.replace("FITS", str(fits))], env=env,
                             capture_output=True, text=True, check=True)
        rows.append(json.loads(res.stdout))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--fits", type=int, default=3, help="fits per method for end-to-end timing")
    ap.add_argument("--skip-fits", action="store_true")
    args = ap.parse_args(argv)

    if not USE_NUMBA:
        print("numba backend disabled in this process; kernel comparison skipped")
    else:
        rng = np.random.default_rng(0)
        print(f"{'kernel':40s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speedup':>8s}")
        for name, (f_np, f_nb) in kernel_cases(rng).items():
            t_np = best_of(f_np, args.repeat)
            t_nb = best_of(f_nb, args.repeat)
            print(f"{name:40s} {1e3 * t_np:12.3f} {1e3 * t_nb:12.3f} {t_np / t_nb:8.1f}")

    if not args.skip_fits:
        print()
        print(f"{'backend':10s} {'SLOBE [s/fit]':>14s} {'ABSLOPE [s/fit]':>16s}")
        for row in fit_timings(args.fits):
            print(f"{row['backend']:10s} {row['slobe']:14.3f} {row['abslope']:16.3f}")


if __name__ == "__main__":
    main()
