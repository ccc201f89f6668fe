"""numba vs numpy timings for the readout and accumulation kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both variants are called directly, so the HOLEVO_DISABLE_NUMBA flag does not
matter here; the script also checks that the two agree.
"""

import argparse
import time

import numpy as np

from holevo import _kernels as k


def _time(fn, *args, repeat=5):
    fn(*args)  # warm-up (and JIT compile)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(rng):
    K = 12
    g = np.linspace(-6, 6, 121)
    Q, P = np.meshgrid(g, g, indexing="ij")
    alpha = ((Q + 1j * P) / np.sqrt(2)).ravel()
    x = np.linspace(-6, 6, 241)
    A = rng.normal(size=(K * K, K * K)) + 1j * rng.normal(size=(K * K, K * K))
    rho = A @ A.conj().T
    rho /= np.trace(rho)
    rho1 = rho[:K, :K] / np.trace(rho[:K, :K])
    cvecs = k.coherent_table_numpy(alpha, K)
    hvecs = k.hermite_table_numpy(x, K)
    err = rng.normal(size=(65536, 3))
    return [
        ("coherent_table 14641x12", k.coherent_table_numpy, k.coherent_table_numba, (alpha, K)),
        ("hermite_table 241x12", k.hermite_table_numpy, k.hermite_table_numba, (x, K)),
        ("quadratic_forms 14641x12", k.quadratic_forms_numpy, k.quadratic_forms_numba, (cvecs, rho1)),
        ("joint_density 14641x241", k.joint_density_numpy, lambda c, h, r: k.joint_density_numba(c, h, k._group_mode1(r)), (cvecs, hvecs, rho.reshape(K, K, K, K))),
        ("chunk_moments 65536x3", k.chunk_moments_numpy, k.chunk_moments_numba, (err,)),
    ]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if k.numba is None:
        raise SystemExit("numba is not installed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>9}  max|diff|")
    for name, f_np, f_nb, a in cases(rng):
        t_np, o_np = _time(f_np, *a, repeat=args.repeat)
        t_nb, o_nb = _time(f_nb, *a, repeat=args.repeat)
        if isinstance(o_np, tuple):
            diff = max(float(np.max(np.abs(u - v))) for u, v in zip(o_np, o_nb))
        else:
            diff = float(np.max(np.abs(o_np - o_nb)))
        print(f"{name:<28}{t_np * 1e3:>12.2f}{t_nb * 1e3:>12.2f}{t_np / t_nb:>9.1f}  {diff:.1e}")


if __name__ == "__main__":
    main()
