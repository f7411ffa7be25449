"""Timing harness: compiled kernels against the pure-numpy implementations.

Run as ``python3 benchmarks/bench_kernels.py``.  Both variants live in
the same process so the comparison shares one BLAS and one allocator.
With CTDTKIT_PURE_NUMPY=1 both columns time the same function; the
script says so instead of reporting a fake speedup.
"""

import time

import numpy as np

from ctdtkit import _kernels as K
from ctdtkit.mpc import condense, double_integrator_problem


def median_time(fn, repeats=5):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return sorted(times)[len(times) // 2]


def affine_workload():
    A = np.array([[-1.0, 0.3], [-0.2, -1.2]])
    B = np.array([[0.25], [0.1]])
    C = np.array([[0.3, 0.2]])
    D = np.array([[0.4]])
    x0 = np.array([1.0, -2.0])
    z0 = np.array([0.7])
    return (A, B, C, D, 2, 0.4, 100, 250, x0, z0, False, 1e24)


def mpc_workload(gamma=10.0):
    prob = double_integrator_problem(gamma=gamma)
    cost = condense(prob)
    bz = prob.ct_B @ prob.first_input_selector
    eta = cost.default_step()
    return (
        prob.ct_A, bz, cost.Hq, cost.F, cost.S, cost.M,
        cost.lb_stack, cost.ub_stack, eta, gamma, 1, 0.02,
        10, 1000, np.array([8.0, 2.5]), np.zeros(5), False, 1e24,
    )


def picard_workload(gamma=100.0):
    prob = double_integrator_problem(gamma=gamma)
    cost = condense(prob)
    return (
        cost.Hq, cost.F, cost.S, cost.M, cost.lb_stack, cost.ub_stack,
        cost.solver_step(), gamma, np.array([9.0, 2.0]), np.zeros(5),
        1e-10, 200_000,
    )


CASES = [
    ("affine ZOH loop (250 intervals, 100 substeps)",
     K.affine_zoh_rk4, K.impl_affine_zoh_rk4, affine_workload()),
    ("penalized update ZOH loop (1000 intervals)",
     K.mpc_zoh_rk4, K.impl_mpc_zoh_rk4, mpc_workload()),
    ("fixed-point solve (heavy penalty)",
     K.mpc_zstar_picard, K.impl_mpc_zstar_picard, picard_workload()),
]


def main():
    if K.PURE_NUMPY:
        print("CTDTKIT_PURE_NUMPY is set: exported kernels ARE the pure "
              "implementations; no speedup to measure.")
    K.warmup()
    width = max(len(name) for name, *_ in CASES)
    print(f"{'case':<{width}}  {'compiled':>10}  {'pure':>10}  {'speedup':>8}")
    for name, fast, pure, args in CASES:
        fast(*args)  # compile outside the timed region
        t_fast = median_time(lambda: fast(*args))
        t_pure = median_time(lambda: pure(*args))
        print(f"{name:<{width}}  {t_fast * 1e3:>8.2f}ms  {t_pure * 1e3:>8.2f}ms  "
              f"{t_pure / t_fast:>7.1f}x")


if __name__ == "__main__":
    main()
