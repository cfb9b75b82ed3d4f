"""Times the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--points 4096] [--cands 32]

The tensor builders run once per scenario, the reduces once per
multiplier step inside the policy search, so the reduce column is the
one that decides how long a full scheme sweep takes.
"""

import argparse
import time

import numpy as np

from nomaq import _backend, _kernels_py


def _inputs(n_pts, m):
    rng = np.random.default_rng(0)
    rho_p = rng.uniform(1, 300, n_pts)
    rho_f = rng.uniform(1, 100, n_pts)
    sig_int = rng.uniform(0.1, 15, n_pts)
    sig_own = np.sqrt(sig_int**2 + rng.uniform(0, 10, n_pts) ** 2)
    sig_f = rng.uniform(0.1, 10, n_pts)
    phi_p = np.sort(rng.uniform(0, 40, (n_pts, m)), axis=1)
    phi_f = np.sort(rng.uniform(0, 40, (n_pts, m)), axis=1)
    w_p = rng.uniform(0, 1, (n_pts, m))
    w_f = rng.uniform(0, 1, (n_pts, m))
    prob = np.full(n_pts, 1.0 / n_pts)
    return rho_p, sig_int, sig_own, rho_f, sig_f, phi_p, phi_f, w_p, w_f, prob


def _time(fn, repeat=3):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--points", type=int, default=4096)
    ap.add_argument("--cands", type=int, default=32)
    args = ap.parse_args()

    impls = [("python", _kernels_py)]
    if _backend.BACKEND == "compiled":
        from nomaq import _speedups
        impls.append(("compiled", _speedups))
    else:
        print("extension not built; timing the fallback only")

    rho_p, sig_int, sig_own, rho_f, sig_f, phi_p, phi_f, w_p, w_f, prob = _inputs(
        args.points, args.cands)

    print(f"points={args.points} candidates={args.cands} "
          f"(tensor {args.points * args.cands * args.cands:,} cells)")
    header = f"{'impl':<10} {'sic build':>11} {'joint build':>12} {'sic reduce':>11} {'joint reduce':>13}"
    print(header)
    print("-" * len(header))
    results = {}
    for name, impl in impls:
        t_build, (eps_p, eps_f) = _time(
            lambda: impl.sic_eps_tensors(rho_p, sig_int, sig_own, rho_f, sig_f,
                                         phi_p, phi_f))
        sig_12 = np.sqrt(sig_int**2 + sig_f**2)
        t_jbuild, eps_j = _time(
            lambda: impl.joint_eps_tensor(rho_p, sig_int, rho_f, sig_f, sig_12,
                                          phi_p, phi_f))
        t_reduce, _ = _time(
            lambda: impl.sic_best_reduce(prob, eps_p, eps_f, w_p, w_f, 1.0, 0.5))
        t_jreduce, _ = _time(
            lambda: impl.joint_best_reduce(prob, eps_j, w_p, w_f, 0.5))
        results[name] = (t_build, t_jbuild, t_reduce, t_jreduce)
        print(f"{name:<10} {t_build:>10.3f}s {t_jbuild:>11.3f}s "
              f"{t_reduce:>10.3f}s {t_jreduce:>12.3f}s")
    if len(results) == 2:
        py = results["python"]
        cy = results["compiled"]
        speedups = ", ".join(f"{p / c:.1f}x" for p, c in zip(py, cy))
        print(f"compiled speedup: {speedups}")


if __name__ == "__main__":
    main()
