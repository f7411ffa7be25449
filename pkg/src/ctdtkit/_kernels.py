"""Hot numeric kernels: ZOH simulation loops and the MPC fixed-point solver.

Every kernel exists twice: a plain Python/numpy implementation
(``impl_*``) and, unless disabled, a numba-compiled version exported
under the bare name. Set ``CTDTKIT_PURE_NUMPY=1`` before import to skip
numba entirely; the exported names then alias the pure implementations.
The two paths run the same algorithm on the same schedule; results agree
to a few ulps (matmul association differs between BLAS and compiled
loops), not necessarily bitwise.

Kernels receive bare float64 arrays (no objects), keep all state in
locals, and release the GIL when compiled, so batch drivers may call
them from worker threads.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

PURE_NUMPY = os.environ.get("CTDTKIT_PURE_NUMPY", "0") == "1"

if not PURE_NUMPY:
    try:
        from numba import njit as _njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        PURE_NUMPY = True

if PURE_NUMPY:
    def _compile(f):
        return f
else:
    def _compile(f):
        return _njit(cache=True, nogil=True)(f)


def _c(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(a, dtype=np.float64))


@dataclass(frozen=True)
class AffinePlan:
    """Array-level description of an LTI interconnection for the fast path."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "C", "D"):
            object.__setattr__(self, name, _c(getattr(self, name)))


@dataclass(frozen=True)
class MpcPlan:
    """Array-level description of the gradient-update interconnection.

    The plant is ``xdot = A x + Bz z`` (input selector already folded into
    Bz) and the DT update is one gradient step on the condensed cost:
    ``z <- z - eta * (Hq z + F x + 2*gamma*S' pen(M x + S z))``.
    """

    A: np.ndarray
    Bz: np.ndarray
    Hq: np.ndarray
    F: np.ndarray
    S: np.ndarray
    M: np.ndarray
    lb_stack: np.ndarray
    ub_stack: np.ndarray
    eta: float
    gamma: float

    def __post_init__(self):
        for name in ("A", "Bz", "Hq", "F", "S", "M", "lb_stack", "ub_stack"):
            object.__setattr__(self, name, _c(getattr(self, name)))


# ------------------------------------------------------------------ kernels
#
# Storage convention shared by the ZOH kernels: row i holds the state at
# t_i = i * (T / substeps). Row k*substeps is the sample instant kT and
# stores the freshly updated (held) z. The final row is the sample at
# t = n_intervals * T, including its z-update. On divergence (non-finite
# or squared norm above div_sq) the offending row is stored and the
# kernel returns early with the diverged flag set.


def impl_affine_zoh_rk4(A, B, C, D, n_it, T, substeps, n_intervals,
                        x0, z0, update_at_zero, div_sq):
    n_x = A.shape[0]
    n_z = D.shape[0]
    n_rows = n_intervals * substeps + 1
    xs = np.zeros((n_rows, n_x))
    zs = np.zeros((n_rows, n_z))
    x = x0.copy()
    z = z0.copy()
    h = T / substeps
    stored = 0
    for k in range(n_intervals + 1):
        if k > 0 or update_at_zero:
            for _ in range(n_it):
                z = C @ x + D @ z
        xs[stored] = x
        zs[stored] = z
        stored += 1
        s = 0.0
        for i in range(n_x):
            s += x[i] * x[i]
        for i in range(n_z):
            s += z[i] * z[i]
        if not np.isfinite(s) or s > div_sq:
            return xs, zs, stored, True
        if k == n_intervals:
            break
        bz = B @ z
        for j in range(substeps):
            k1 = A @ x + bz
            k2 = A @ (x + (0.5 * h) * k1) + bz
            k3 = A @ (x + (0.5 * h) * k2) + bz
            k4 = A @ (x + h * k3) + bz
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if j < substeps - 1:
                xs[stored] = x
                zs[stored] = z
                stored += 1
                s = 0.0
                for i in range(n_x):
                    s += x[i] * x[i]
                if not np.isfinite(s) or s > div_sq:
                    return xs, zs, stored, True
    return xs, zs, stored, False


def impl_mpc_grad_step(Hq, F, S, M, lb, ub, eta, gamma, x, z, n_it):
    for _ in range(n_it):
        g = Hq @ z + F @ x
        if gamma > 0.0:
            pred = M @ x + S @ z
            v = np.zeros(pred.shape[0])
            for i in range(pred.shape[0]):
                if pred[i] > ub[i]:
                    v[i] = pred[i] - ub[i]
                elif pred[i] < lb[i]:
                    v[i] = pred[i] - lb[i]
            g = g + (2.0 * gamma) * (S.T @ v)
        z = z - eta * g
    return z


def impl_mpc_zoh_rk4(A, Bz, Hq, F, S, M, lb, ub, eta, gamma, n_it, T,
                     substeps, n_intervals, x0, z0, update_at_zero, div_sq):
    n_x = A.shape[0]
    n_z = Hq.shape[0]
    n_rows = n_intervals * substeps + 1
    xs = np.zeros((n_rows, n_x))
    zs = np.zeros((n_rows, n_z))
    x = x0.copy()
    z = z0.copy()
    h = T / substeps
    stored = 0
    for k in range(n_intervals + 1):
        if k > 0 or update_at_zero:
            z = impl_mpc_grad_step(Hq, F, S, M, lb, ub, eta, gamma, x, z, n_it)
        xs[stored] = x
        zs[stored] = z
        stored += 1
        s = 0.0
        for i in range(n_x):
            s += x[i] * x[i]
        for i in range(n_z):
            s += z[i] * z[i]
        if not np.isfinite(s) or s > div_sq:
            return xs, zs, stored, True
        if k == n_intervals:
            break
        bz = Bz @ z
        for j in range(substeps):
            k1 = A @ x + bz
            k2 = A @ (x + (0.5 * h) * k1) + bz
            k3 = A @ (x + (0.5 * h) * k2) + bz
            k4 = A @ (x + h * k3) + bz
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if j < substeps - 1:
                xs[stored] = x
                zs[stored] = z
                stored += 1
                s = 0.0
                for i in range(n_x):
                    s += x[i] * x[i]
                if not np.isfinite(s) or s > div_sq:
                    return xs, zs, stored, True
    return xs, zs, stored, False


def impl_mpc_zstar_picard(Hq, F, S, M, lb, ub, eta, gamma, x, z0, tol, max_iter):
    # Picard iteration on the gradient map; eta here is the solver's own
    # step, not necessarily the simulated update's step (same fixed point)
    z = z0.copy()
    residual = np.inf
    for k in range(max_iter):
        g = Hq @ z + F @ x
        if gamma > 0.0:
            pred = M @ x + S @ z
            v = np.zeros(pred.shape[0])
            for i in range(pred.shape[0]):
                if pred[i] > ub[i]:
                    v[i] = pred[i] - ub[i]
                elif pred[i] < lb[i]:
                    v[i] = pred[i] - lb[i]
            g = g + (2.0 * gamma) * (S.T @ v)
        step = eta * g
        residual = 0.0
        for i in range(step.shape[0]):
            residual += step[i] * step[i]
        residual = np.sqrt(residual)
        if residual <= tol:
            return z, k + 1, residual, True
        if not np.isfinite(residual):
            return z, k + 1, residual, False
        z = z - step
    return z, max_iter, residual, False


affine_zoh_rk4 = _compile(impl_affine_zoh_rk4)
_mpc_grad_step_jit = _compile(impl_mpc_grad_step)
mpc_zstar_picard = _compile(impl_mpc_zstar_picard)

if PURE_NUMPY:
    mpc_zoh_rk4 = impl_mpc_zoh_rk4
else:
    # rebuild the ZOH loop around the compiled gradient step so the call
    # inside the loop stays a jitted-to-jitted call
    def _make_mpc_zoh(grad_step):
        def body(A, Bz, Hq, F, S, M, lb, ub, eta, gamma, n_it, T,
                 substeps, n_intervals, x0, z0, update_at_zero, div_sq):
            n_x = A.shape[0]
            n_z = Hq.shape[0]
            n_rows = n_intervals * substeps + 1
            xs = np.zeros((n_rows, n_x))
            zs = np.zeros((n_rows, n_z))
            x = x0.copy()
            z = z0.copy()
            h = T / substeps
            stored = 0
            for k in range(n_intervals + 1):
                if k > 0 or update_at_zero:
                    z = grad_step(Hq, F, S, M, lb, ub, eta, gamma, x, z, n_it)
                xs[stored] = x
                zs[stored] = z
                stored += 1
                s = 0.0
                for i in range(n_x):
                    s += x[i] * x[i]
                for i in range(n_z):
                    s += z[i] * z[i]
                if not np.isfinite(s) or s > div_sq:
                    return xs, zs, stored, True
                if k == n_intervals:
                    break
                bz = Bz @ z
                for j in range(substeps):
                    k1 = A @ x + bz
                    k2 = A @ (x + (0.5 * h) * k1) + bz
                    k3 = A @ (x + (0.5 * h) * k2) + bz
                    k4 = A @ (x + h * k3) + bz
                    x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                    if j < substeps - 1:
                        xs[stored] = x
                        zs[stored] = z
                        stored += 1
                        s = 0.0
                        for i in range(n_x):
                            s += x[i] * x[i]
                        if not np.isfinite(s) or s > div_sq:
                            return xs, zs, stored, True
            return xs, zs, stored, False
        return body

    mpc_zoh_rk4 = _compile(_make_mpc_zoh(_mpc_grad_step_jit))


def warmup() -> None:
    """Force compilation of all kernels on tiny inputs (no-op when pure)."""
    A = np.array([[-1.0]])
    B = np.array([[0.5]])
    C = np.array([[0.1]])
    D = np.array([[0.2]])
    x0 = np.array([1.0])
    z0 = np.array([0.0])
    affine_zoh_rk4(A, B, C, D, 1, 0.1, 2, 2, x0, z0, False, 1e24)
    Hq = np.array([[2.0]])
    F = np.array([[1.0]])
    S = np.array([[1.0]])
    M = np.array([[1.0]])
    lb = np.array([-1.0])
    ub = np.array([1.0])
    mpc_zoh_rk4(A, B, Hq, F, S, M, lb, ub, 0.1, 1.0, 1, 0.1, 2, 2,
                x0, z0, False, 1e24)
    mpc_zstar_picard(Hq, F, S, M, lb, ub, 0.1, 1.0, x0, z0, 1e-10, 1000)
