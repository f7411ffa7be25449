"""System abstractions for the CT-DT interconnection.

A continuous-time plant ``xdot = f(x, z)`` is driven through a zero-order
hold by a discrete-time map ``G`` that is iterated ``n`` times on the
sampled state every ``T`` seconds. This module holds the container types,
n-fold composition, the Picard fixed-point solver behind ``z*(x)``, the
reduced model ``x -> f(x, z*(x))``, and the LTI specialization with exact
zero-order-hold discretization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import expm

from . import _kernels

__all__ = [
    "LtiSystem",
    "CtDtSystem",
    "FixedPointResult",
    "compose_G",
    "fixed_point_zstar",
    "reduced_model",
    "zoh_discretize",
    "make_lti_ctdt",
    "lti_reduced_matrix",
]

FIXED_POINT_TOL = 1e-12
FIXED_POINT_MAX_ITER = 100_000


def _as_matrix(M, name: str) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


@dataclass(frozen=True)
class LtiSystem:
    """Interconnected LTI pair: plant (A, B) and sampled map (C, D).

    The continuous-time side is ``xdot = A x + B z`` and the discrete-time
    update is ``G(x, z) = C x + D z``.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        C = _as_matrix(self.C, "C")
        D = _as_matrix(self.D, "D")
        n_x = A.shape[0]
        if A.shape != (n_x, n_x):
            raise ValueError("A must be square")
        n_z = D.shape[0]
        if D.shape != (n_z, n_z):
            raise ValueError("D must be square")
        if B.shape != (n_x, n_z):
            raise ValueError(f"B must be {n_x}x{n_z}, got {B.shape}")
        if C.shape != (n_z, n_x):
            raise ValueError(f"C must be {n_z}x{n_x}, got {C.shape}")
        for name, M in (("A", A), ("B", B), ("C", C), ("D", D)):
            object.__setattr__(self, name, M)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_z(self) -> int:
        return self.D.shape[0]


@dataclass(frozen=True)
class CtDtSystem:
    """CT vector field plus DT map with iteration count and sampling period.

    ``f`` and ``G`` must be pure functions; both are normalized so that the
    origin is an equilibrium (f(0,0) = 0 and G(0,0) = 0 within 1e-12).
    ``kernel`` optionally carries an array-level description that the
    simulator can hand to a compiled fast path; the callables remain the
    source of truth.
    """

    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    G: Callable[[np.ndarray, np.ndarray], np.ndarray]
    n: int
    T: float
    n_x: int
    n_z: int
    kernel: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1 or int(self.n) != self.n:
            raise ValueError("n must be a positive integer")
        if not self.T > 0.0:
            raise ValueError("T must be positive")
        x0 = np.zeros(self.n_x)
        z0 = np.zeros(self.n_z)
        if np.max(np.abs(np.asarray(self.f(x0, z0), dtype=float))) > 1e-12:
            raise ValueError("f(0, 0) must vanish (origin is the equilibrium)")
        if np.max(np.abs(np.asarray(self.G(x0, z0), dtype=float))) > 1e-12:
            raise ValueError("G(0, 0) must vanish (origin is the equilibrium)")

    @property
    def dims(self) -> tuple[int, int]:
        return (self.n_x, self.n_z)


@dataclass(frozen=True)
class FixedPointResult:
    z_star: np.ndarray
    iterations: int
    residual: float
    converged: bool


def compose_G(sys: CtDtSystem, x: np.ndarray, z: np.ndarray, n: int) -> np.ndarray:
    """n-fold composition of the DT map in its second argument at fixed x."""
    if n < 1 or int(n) != n:
        raise ValueError("n must be a positive integer")
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    for _ in range(int(n)):
        z = np.asarray(sys.G(x, z), dtype=float)
        if not np.all(np.isfinite(z)):
            raise FloatingPointError("DT map produced a non-finite intermediate")
    return z


def fixed_point_zstar(
    sys: CtDtSystem,
    x: np.ndarray,
    z0: np.ndarray | None = None,
    tol: float = FIXED_POINT_TOL,
    max_iter: int = FIXED_POINT_MAX_ITER,
) -> FixedPointResult:
    """Picard iteration for the fixed point of z -> G(x, z).

    Convergence requires the DT map to be a contraction in z (caller's
    responsibility). Plain iteration, no acceleration. On success the
    returned residual is ``||G(x, z_star) - z_star||_2 <= tol``; when the
    budget is exhausted the result carries ``converged=False`` and the
    last residual.
    """
    x = np.asarray(x, dtype=float)
    z = np.zeros(sys.n_z) if z0 is None else np.asarray(z0, dtype=float)
    residual = np.inf
    for k in range(1, int(max_iter) + 1):
        w = np.asarray(sys.G(x, z), dtype=float)
        if not np.all(np.isfinite(w)):
            return FixedPointResult(z, k, float("inf"), False)
        residual = float(np.linalg.norm(w - z))
        if residual <= tol:
            # z (not w) is the point whose residual was just certified
            return FixedPointResult(z, k, residual, True)
        z = w
    return FixedPointResult(z, int(max_iter), residual, False)


def reduced_model(sys: CtDtSystem) -> Callable[[np.ndarray], np.ndarray]:
    """Vector field of the limiting closed loop x -> f(x, z*(x)).

    Each evaluation solves the fixed point to 1e-12 and applies f.
    Fixed-point failure raises with the last residual.
    """

    def rm(x: np.ndarray) -> np.ndarray:
        res = fixed_point_zstar(sys, x)
        if not res.converged:
            raise RuntimeError(
                f"fixed point did not converge (residual {res.residual:.3e} "
                f"after {res.iterations} iterations)"
            )
        return np.asarray(sys.f(np.asarray(x, dtype=float), res.z_star), dtype=float)

    return rm


def zoh_discretize(A: np.ndarray, B: np.ndarray, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold discretization of xdot = A x + B u.

    Returns (Ad, Bd) with Ad = e^{A*delta} and Bd = (integral of
    e^{A*(delta-s)} ds) B, both read off the top blocks of the augmented
    exponential exp([[A, B], [0, 0]] * delta).
    """
    if not delta > 0.0:
        raise ValueError("delta must be positive")
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    n, m = A.shape[0], B.shape[1]
    if A.shape != (n, n) or B.shape[0] != n:
        raise ValueError("A must be square and B conformable")
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = A
    aug[:n, n:] = B
    phi = expm(aug * delta)
    return phi[:n, :n].copy(), phi[:n, n:].copy()


def lti_reduced_matrix(sys: LtiSystem) -> np.ndarray:
    """Reduced-model matrix A + B (I - D)^{-1} C of an LTI interconnection."""
    n_z = sys.n_z
    eye_minus_d = np.eye(n_z) - sys.D
    try:
        K = np.linalg.solve(eye_minus_d, sys.C)
    except np.linalg.LinAlgError as exc:
        raise ValueError("I - D is singular; the DT fixed point is not defined") from exc
    return sys.A + sys.B @ K


def make_lti_ctdt(sys: LtiSystem, n: int, T: float) -> CtDtSystem:
    """Wrap an LTI pair as a CtDtSystem with an attached fast-path plan."""
    A, B, C, D = sys.A, sys.B, sys.C, sys.D

    def f(x, z):
        return A @ x + B @ z

    def G(x, z):
        return C @ x + D @ z

    plan = _kernels.AffinePlan(A=A, B=B, C=C, D=D)
    return CtDtSystem(f=f, G=G, n=n, T=T, n_x=sys.n_x, n_z=sys.n_z, kernel=plan)
