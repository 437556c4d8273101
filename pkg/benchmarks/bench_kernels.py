"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--n 500] [--t 300] [--repeat 5]

Kernel timings call both implementations in one process.  The end-to-end
section reruns one factor-pricing test in a subprocess per backend, selected
through POWERENHANCE_BACKEND, the same way a user would.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from powerenhance import kernels

E2E = """
import time
from powerenhance.kernels import BACKEND
from powerenhance.montecarlo import FpDgpSpec, gen_fp_dataset
from powerenhance.quad_tests import power_enhanced_fp
d = gen_fp_dataset(FpDgpSpec({n}, {t}), 1)
power_enhanced_fp(d.returns, d.factors)  # warm-up (and JIT compile)
t0 = time.perf_counter()
for _ in range({repeat}):
    power_enhanced_fp(d.returns, d.factors)
print(BACKEND, (time.perf_counter() - t0) / {repeat})
"""


def best(fn, repeat):
    fn()  # warm-up, includes JIT compilation
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--t", type=int, default=300)
    ap.add_argument("--repeat", type=int, default=5)
    a = ap.parse_args()
    if not kernels.HAVE_NUMBA:
        sys.exit("numba is not importable; nothing to compare")

    rng = np.random.default_rng(0)
    u = rng.normal(size=(a.n, a.t))
    s = u @ u.T / a.t
    s_valid = rng.normal(size=(a.n, a.n))
    s_valid = (s_valid + s_valid.T) / 2
    scale = float(np.log(a.n) / a.t)
    cs = np.arange(0.0, 3.0001, 0.05)
    soft = kernels.RULE_CODES["soft"]

    cases = {
        "threshold_offdiag": (
            lambda: kernels.threshold_offdiag_numpy(s, 1.0, scale, soft, 3.7),
            lambda: kernels.threshold_offdiag_numba(s, 1.0, scale, soft, 3.7),
        ),
        f"threshold_loss ({cs.size} C values)": (
            lambda: kernels.threshold_loss_numpy(s, s_valid, cs, scale, soft, 3.7),
            lambda: kernels.threshold_loss_numba(s, s_valid, cs, scale, soft, 3.7),
        ),
        "pair_correlations": (
            lambda: kernels.pair_correlations_numpy(u),
            lambda: kernels.pair_correlations_numba(u),
        ),
    }
    print(f"N={a.n} T={a.t}, best of {a.repeat}")
    print(f"{'kernel':<32}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}{'max diff':>11}")
    for name, (f_np, f_nb) in cases.items():
        t_np, t_nb = best(f_np, a.repeat), best(f_nb, a.repeat)
        diff = float(np.max(np.abs(np.asarray(f_np()) - np.asarray(f_nb()))))
        print(f"{name:<32}{1e3 * t_np:>10.2f}{1e3 * t_nb:>10.2f}{t_np / t_nb:>9.1f}{diff:>11.1e}")

    print("\nend to end, one factor-pricing test (seconds):")
    for backend in ("numpy", "numba"):
        env = dict(os.environ, POWERENHANCE_BACKEND=backend)
        code = E2E.format(n=a.n, t=a.t, repeat=a.repeat)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        print("  " + out.stdout.strip())


if __name__ == "__main__":
    main()
