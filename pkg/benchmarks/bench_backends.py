"""Time the hot kernels under the numba backend and the pure-numpy fallback.

Each backend runs in its own subprocess (the backend is fixed at import time
by SPATCOV_BACKEND), on identical workloads:

  * maximin ordering + neighbor search
  * one full sampler iteration's column pass (marginal + draws)
  * dense covariance reconstruction from a sparse factor

Usage: python benchmarks/bench_backends.py [n_cells ...]
"""

import json
import os
import subprocess
import sys

WORKER = r"""
import json
import sys
import time

import numpy as np

n_list = json.loads(sys.argv[1])

from spatcov._accel import USING_NUMBA, _draw_pass, _factor_covariance, _marginal_pass
from spatcov.gibbs import PRIOR_SHAPE, prior_arrays, _gram
from spatcov.spatial import build_ordering

def bench(fn, *args, repeat=5):
    fn(*args)  # warm-up covers the JIT compile on the numba path
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best

out = {"backend": "numba" if USING_NUMBA else "numpy", "cases": {}}
rng = np.random.default_rng(0)
n_genes, m = 20, 10
for n in n_list:
    pts = rng.uniform(size=(n, 2))
    case = {}
    case["ordering"] = bench(lambda: build_ordering(pts, m))
    ordering = build_ordering(pts, m)
    y = rng.standard_normal((n_genes, n))
    lam_chol = np.linalg.cholesky(np.eye(n_genes) + 0.2)
    gram = _gram(lam_chol, y)
    beta, sqrt_v = prior_arrays(np.array([1.0, -1.0, 0.0]), n, 2, m)
    lens = ordering.neighbor_counts()
    alpha_tilde = PRIOR_SHAPE + 0.5 * n_genes
    case["marginal_pass"] = bench(
        lambda: _marginal_pass(gram, ordering.neighbors, lens, sqrt_v, beta,
                               PRIOR_SHAPE, alpha_tilde, m)
    )
    gammas = rng.standard_gamma(alpha_tilde, size=n)
    z = rng.standard_normal((n, m))
    u = np.zeros((n, m)); d = np.empty(n); bt = np.empty(n)
    case["draw_pass"] = bench(
        lambda: _draw_pass(gram, ordering.neighbors, lens, sqrt_v, beta,
                           gammas, z, u, d, bt, m)
    )
    values = np.zeros((n, m))
    for i in range(n):
        values[i, :lens[i]] = 0.2 * rng.standard_normal(lens[i])
    diag = rng.uniform(0.5, 1.5, size=n)
    case["factor_to_cov"] = bench(
        lambda: _factor_covariance(ordering.neighbors, lens, values, diag)
    )
    out["cases"][str(n)] = case
print(json.dumps(out))
"""


def run_backend(backend, n_list):
    env = dict(os.environ, SPATCOV_BACKEND=backend)
    proc = subprocess.run(
        [sys.executable, "-c", WORKER, json.dumps(n_list)],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main():
    n_list = [int(v) for v in sys.argv[1:]] or [200, 1000]
    results = {b: run_backend(b, n_list) for b in ("numba", "numpy")}
    kernels = ["ordering", "marginal_pass", "draw_pass", "factor_to_cov"]
    print(f"{'kernel':<16}{'n':>6}{'numba (ms)':>14}{'numpy (ms)':>14}{'speedup':>10}")
    for n in n_list:
        for kernel in kernels:
            t_nb = results["numba"]["cases"][str(n)][kernel] * 1e3
            t_np = results["numpy"]["cases"][str(n)][kernel] * 1e3
            ratio = t_np / t_nb if t_nb > 0 else float("inf")
            print(f"{kernel:<16}{n:>6}{t_nb:>14.3f}{t_np:>14.3f}{ratio:>9.1f}x")


if __name__ == "__main__":
    main()
