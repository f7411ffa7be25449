"""Receding-horizon quadratic control as a CT-DT interconnection.

Builds the condensed finite-horizon cost for an LTI plant (quadratic
stage costs, Riccati terminal weight, optional soft box penalties on
the predicted states), exposes the gradient-descent update as a DT map,
and estimates the reduced-model Jacobian by differencing the fixed
point.  The double-integrator benchmark lives here as a one-call
constructor.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .norms import log_norm_2_weighted
from .systems import CtDtSystem, FixedPointResult, zoh_discretize

_SYM_TOL = 1e-10


def _check_spd(name: str, mat: np.ndarray) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {mat.shape}")
    if not np.all(np.abs(mat - mat.T) <= _SYM_TOL):
        raise ValueError(f"{name} must be symmetric within {_SYM_TOL}")
    if np.linalg.eigvalsh(mat)[0] <= 0.0:
        raise ValueError(f"{name} must be positive definite")
    return 0.5 * (mat + mat.T)


@dataclass(frozen=True)
class MpcProblem:
    """Finite-horizon quadratic problem over a ZOH-discretized plant.

    ct_A, ct_B describe the continuous plant; Ad, Bd its exact
    discretization at the prediction step.  The decision variable is the
    stacked input sequence of length horizon.  When gamma > 0 the
    predicted states (stages 2..horizon+1) are softly confined to
    [lb, ub] via squared hinge penalties.
    """

    ct_A: np.ndarray
    ct_B: np.ndarray
    Ad: np.ndarray
    Bd: np.ndarray
    horizon: int
    Q: np.ndarray
    R: np.ndarray
    P: np.ndarray
    gamma: float = 0.0
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self) -> None:
        ct_A = np.asarray(self.ct_A, dtype=float)
        ct_B = np.asarray(self.ct_B, dtype=float)
        Ad = np.asarray(self.Ad, dtype=float)
        Bd = np.asarray(self.Bd, dtype=float)
        n_x = ct_A.shape[0]
        if ct_A.shape != (n_x, n_x) or Ad.shape != (n_x, n_x):
            raise ValueError("plant matrices must be square and same size")
        if ct_B.ndim != 2 or ct_B.shape[0] != n_x or Bd.shape != ct_B.shape:
            raise ValueError("input matrices must be n_x by n_u")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if not math.isfinite(self.gamma) or self.gamma < 0.0:
            raise ValueError("penalty weight must be finite and nonnegative")
        object.__setattr__(self, "ct_A", ct_A)
        object.__setattr__(self, "ct_B", ct_B)
        object.__setattr__(self, "Ad", Ad)
        object.__setattr__(self, "Bd", Bd)
        object.__setattr__(self, "Q", _check_spd("Q", self.Q))
        object.__setattr__(self, "R", _check_spd("R", self.R))
        object.__setattr__(self, "P", _check_spd("P", self.P))
        if self.Q.shape[0] != n_x or self.P.shape[0] != n_x:
            raise ValueError("Q and P must match the state dimension")
        if self.R.shape[0] != ct_B.shape[1]:
            raise ValueError("R must match the input dimension")
        if self.gamma > 0.0:
            if self.lb is None or self.ub is None:
                raise ValueError("state bounds are required when gamma > 0")
        if self.lb is not None and self.ub is not None:
            lb = np.asarray(self.lb, dtype=float)
            ub = np.asarray(self.ub, dtype=float)
            if lb.shape != (n_x,) or ub.shape != (n_x,):
                raise ValueError("bounds must be length-n_x vectors")
            if not np.all(lb < ub):
                raise ValueError("lower bounds must be below upper bounds")
            object.__setattr__(self, "lb", lb)
            object.__setattr__(self, "ub", ub)

    @property
    def n_x(self) -> int:
        return self.ct_A.shape[0]

    @property
    def n_u(self) -> int:
        return self.ct_B.shape[1]

    @property
    def n_z(self) -> int:
        return self.horizon * self.n_u

    @property
    def first_input_selector(self) -> np.ndarray:
        """n_u by n_z matrix extracting the first input of the sequence."""
        m = self.n_u
        sel = np.zeros((m, self.n_z))
        sel[:, :m] = np.eye(m)
        return sel


def dare_solve(
    Ad: np.ndarray,
    Bd: np.ndarray,
    Q: np.ndarray,
    R: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 1_000_000,
) -> np.ndarray:
    """Terminal weight by iterating the Riccati recursion to a fixed point.

    Divergence of the iteration (non-finite entries or no convergence
    within max_iter) signals a non-stabilizable pair and raises.
    """
    Ad = np.asarray(Ad, dtype=float)
    Bd = np.asarray(Bd, dtype=float)
    Q = _check_spd("Q", Q)
    R = _check_spd("R", R)
    P = Q.copy()
    for _ in range(max_iter):
        PB = P @ Bd
        gain = np.linalg.solve(Bd.T @ PB + R, PB.T @ Ad)
        P_next = Ad.T @ P @ Ad - (Ad.T @ PB) @ gain + Q
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)):
            raise RuntimeError("Riccati iteration produced non-finite values")
        if np.max(np.abs(P_next - P)) <= tol:
            return P_next
        P = P_next
    raise RuntimeError(f"Riccati iteration did not converge in {max_iter} steps")


def dare_residual(
    Ad: np.ndarray, Bd: np.ndarray, Q: np.ndarray, R: np.ndarray, P: np.ndarray
) -> float:
    PB = P @ Bd
    gain = np.linalg.solve(Bd.T @ PB + R, PB.T @ Ad)
    return float(
        np.linalg.norm(Ad.T @ P @ Ad - (Ad.T @ PB) @ gain + Q - P, 2)
    )


def double_integrator_problem(
    delta: float = 0.2,
    horizon: int = 5,
    gamma: float = 0.0,
    lb: tuple[float, float] = (-10.0, -3.0),
    ub: tuple[float, float] = (10.0, 3.0),
) -> MpcProblem:
    """Benchmark instance: position/velocity chain with unit weights."""
    ct_A = np.array([[0.0, 1.0], [0.0, 0.0]])
    ct_B = np.array([[0.0], [1.0]])
    Ad, Bd = zoh_discretize(ct_A, ct_B, delta)
    Q = np.eye(2)
    R = np.array([[1.0]])
    P = dare_solve(Ad, Bd, Q, R)
    return MpcProblem(
        ct_A=ct_A,
        ct_B=ct_B,
        Ad=Ad,
        Bd=Bd,
        horizon=horizon,
        Q=Q,
        R=R,
        P=P,
        gamma=gamma,
        lb=np.asarray(lb, dtype=float),
        ub=np.asarray(ub, dtype=float),
    )


@dataclass(frozen=True)
class CondensedCost:
    """Stacked-prediction form of the horizon cost.

    Predicted stages 2..horizon+1 are M x + S z.  The quadratic part is
    z' Rt z + (Mx+Sz)' Qt (Mx+Sz); its gradient is Hq z + F x up to the
    constant current-stage term, which is dropped (it does not depend on
    the decision variable).  mu and ell_quad are the extreme eigenvalues
    of Hq; ell adds the worst-case penalty curvature 2*gamma*||S||^2.
    """

    M: np.ndarray
    S: np.ndarray
    Qt: np.ndarray
    Rt: np.ndarray
    Hq: np.ndarray
    F: np.ndarray
    gamma: float
    lb_stack: np.ndarray
    ub_stack: np.ndarray
    mu: float
    ell_quad: float
    ell: float
    s_norm: float = field(repr=False, default=0.0)

    def predict(self, z: np.ndarray, x: np.ndarray) -> np.ndarray:
        return self.M @ np.asarray(x, float) + self.S @ np.asarray(z, float)

    def _violation(self, stacked: np.ndarray) -> np.ndarray:
        return np.maximum(stacked - self.ub_stack, 0.0) - np.maximum(
            self.lb_stack - stacked, 0.0
        )

    def cost(self, z: np.ndarray, x: np.ndarray) -> float:
        z = np.asarray(z, dtype=float)
        stacked = self.predict(z, x)
        value = float(z @ (self.Rt @ z) + stacked @ (self.Qt @ stacked))
        if self.gamma > 0.0:
            over = np.maximum(stacked - self.ub_stack, 0.0)
            under = np.maximum(self.lb_stack - stacked, 0.0)
            value += self.gamma * float(over @ over + under @ under)
        return value

    def gradient(self, z: np.ndarray, x: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        x = np.asarray(x, dtype=float)
        g = self.Hq @ z + self.F @ x
        if self.gamma > 0.0:
            g = g + (2.0 * self.gamma) * (self.S.T @ self._violation(self.predict(z, x)))
        return g

    def admissible_step_limit(self) -> float:
        return 2.0 * self.mu / self.ell**2

    def default_step(self) -> float:
        return min(1.0 / self.ell, 1.9 * self.mu / self.ell**2)

    def solver_step(self) -> float:
        """Fastest safe Picard step for locating the fixed point."""
        return 2.0 / (self.mu + self.ell)


def condense(prob: MpcProblem) -> CondensedCost:
    """Substitute the dynamics to express the horizon cost in z alone."""
    H, n_x, n_u = prob.horizon, prob.n_x, prob.n_u
    M = np.zeros((H * n_x, n_x))
    S = np.zeros((H * n_x, H * n_u))
    power = np.eye(n_x)
    for i in range(H):
        power = prob.Ad @ power  # Ad^(i+1)
        M[i * n_x : (i + 1) * n_x] = power
    for j in range(H):
        block = prob.Bd.copy()
        for i in range(j, H):
            S[i * n_x : (i + 1) * n_x, j * n_u : (j + 1) * n_u] = block
            block = prob.Ad @ block
    Qt = np.zeros((H * n_x, H * n_x))
    for i in range(H - 1):
        Qt[i * n_x : (i + 1) * n_x, i * n_x : (i + 1) * n_x] = prob.Q
    Qt[(H - 1) * n_x :, (H - 1) * n_x :] = prob.P
    Rt = np.kron(np.eye(H), prob.R)
    Hq = 2.0 * (Rt + S.T @ Qt @ S)
    Hq = 0.5 * (Hq + Hq.T)
    F = 2.0 * (S.T @ Qt @ M)
    eigs = np.linalg.eigvalsh(Hq)
    mu, ell_quad = float(eigs[0]), float(eigs[-1])
    if mu <= 0.0:
        raise ValueError("condensed Hessian is not positive definite")
    s_norm = float(np.linalg.norm(S, 2))
    ell = ell_quad + 2.0 * prob.gamma * s_norm**2
    if prob.lb is not None and prob.ub is not None:
        lb_stack = np.tile(prob.lb, H)
        ub_stack = np.tile(prob.ub, H)
    else:
        lb_stack = np.full(H * n_x, -np.inf)
        ub_stack = np.full(H * n_x, np.inf)
    return CondensedCost(
        M=M,
        S=S,
        Qt=Qt,
        Rt=Rt,
        Hq=Hq,
        F=F,
        gamma=prob.gamma,
        lb_stack=lb_stack,
        ub_stack=ub_stack,
        mu=mu,
        ell_quad=ell_quad,
        ell=ell,
        s_norm=s_norm,
    )


def unconstrained_gain(prob: MpcProblem) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form minimizer map and the CT closed loop it induces.

    Returns (K, A_cl) where the minimizing sequence is z*(x) = -K x and
    A_cl = ct_A - ct_B @ sel @ K feeds the first input back into the
    plant.
    """
    if prob.gamma != 0.0:
        raise ValueError("closed-form gain requires a zero penalty weight")
    cost = condense(prob)
    K = np.linalg.solve(cost.Hq, cost.F)
    a_cl = prob.ct_A - prob.ct_B @ (prob.first_input_selector @ K)
    return K, a_cl


def gradient_map(cost: CondensedCost, step: float | None = None):
    """One descent step on the condensed cost as a DT map (x, z) -> z.

    The step must lie in (0, 2*mu/ell^2), which makes the map a
    z-contraction uniformly in x; its fixed point is the minimizer.
    """
    if step is None:
        step = cost.default_step()
    limit = cost.admissible_step_limit()
    if not 0.0 < step < limit:
        raise ValueError(f"step {step} outside the admissible interval (0, {limit})")

    def update(x: np.ndarray, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=float) - step * cost.gradient(z, x)

    update.step = step
    return update


def gradient_map_lipschitz(cost: CondensedCost, step: float) -> float:
    """z-Lipschitz constant of the descent map.

    Exact for the pure quadratic; with penalties active the Hessian
    ranges over [mu, ell] and the interval bound is returned.
    """
    if cost.gamma == 0.0:
        eigs = np.linalg.eigvalsh(cost.Hq)
        return float(np.max(np.abs(1.0 - step * eigs)))
    return max(abs(1.0 - step * cost.mu), abs(1.0 - step * cost.ell))


def zstar_solve(
    prob: MpcProblem,
    x: np.ndarray,
    z0: np.ndarray | None = None,
    step: float | None = None,
    tol: float = 1e-10,
    max_iter: int = 200_000,
    cost: CondensedCost | None = None,
) -> FixedPointResult:
    """Minimizer of the condensed cost at fixed x, by Picard iteration.

    The solver may take a larger step than any admissible simulated
    update; the fixed point is the same for every valid step size.
    """
    if cost is None:
        cost = condense(prob)
    if step is None:
        step = cost.solver_step()
    x = np.asarray(x, dtype=float)
    z0 = np.zeros(prob.n_z) if z0 is None else np.asarray(z0, dtype=float)
    z, iters, residual, converged = _kernels.mpc_zstar_picard(
        cost.Hq,
        cost.F,
        cost.S,
        cost.M,
        cost.lb_stack,
        cost.ub_stack,
        float(step),
        float(cost.gamma),
        x,
        z0,
        float(tol),
        int(max_iter),
    )
    return FixedPointResult(
        z_star=z, iterations=int(iters), residual=float(residual), converged=bool(converged)
    )


def zstar_jacobian(
    prob: MpcProblem,
    x: np.ndarray,
    fd_step: float = 0.01,
    tol: float = 1e-10,
    max_iter: int = 200_000,
    cost: CondensedCost | None = None,
) -> np.ndarray:
    """Sensitivity of the minimizer to the state, by central differences.

    Each perturbed solve is warm-started from the center fixed point.
    """
    if cost is None:
        cost = condense(prob)
    x = np.asarray(x, dtype=float)
    center = zstar_solve(prob, x, tol=tol, max_iter=max_iter, cost=cost)
    if not center.converged:
        raise RuntimeError(f"fixed-point solve failed at x={x}")
    jac = np.zeros((prob.n_z, x.size))
    for i in range(x.size):
        shift = np.zeros_like(x)
        shift[i] = fd_step
        plus = zstar_solve(
            prob, x + shift, z0=center.z_star, tol=tol, max_iter=max_iter, cost=cost
        )
        minus = zstar_solve(
            prob, x - shift, z0=center.z_star, tol=tol, max_iter=max_iter, cost=cost
        )
        if not (plus.converged and minus.converged):
            raise RuntimeError(f"fixed-point solve failed near x={x}")
        jac[:, i] = (plus.z_star - minus.z_star) / (2.0 * fd_step)
    return jac


def rm_lognorm_contour(
    prob: MpcProblem,
    x1_values: np.ndarray,
    x2_values: np.ndarray,
    weight: np.ndarray | None = None,
    fd_step: float = 0.01,
    tol: float = 1e-10,
    max_iter: int = 200_000,
    threads: int = 1,
) -> np.ndarray:
    """Weighted log norm of the reduced-model linearization over a grid.

    Cell (i, j) evaluates at x = (x1_values[i], x2_values[j]); cells
    whose fixed-point solves fail are left as nan.  Negative values
    certify local contraction of the limiting closed loop.
    """
    if prob.n_x != 2:
        raise ValueError("the contour grid is defined for planar states only")
    weight = prob.P if weight is None else np.asarray(weight, dtype=float)
    cost = condense(prob)
    x1_values = np.asarray(x1_values, dtype=float)
    x2_values = np.asarray(x2_values, dtype=float)
    sel = prob.first_input_selector

    def cell(idx: int) -> float:
        i, j = divmod(idx, x2_values.size)
        x = np.array([x1_values[i], x2_values[j]])
        try:
            jac = zstar_jacobian(
                prob, x, fd_step=fd_step, tol=tol, max_iter=max_iter, cost=cost
            )
        except RuntimeError:
            return math.nan
        rm = prob.ct_A + prob.ct_B @ (sel @ jac)
        return log_norm_2_weighted(rm, weight)

    total = x1_values.size * x2_values.size
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            flat = list(pool.map(cell, range(total)))
    else:
        flat = [cell(idx) for idx in range(total)]
    return np.array(flat).reshape(x1_values.size, x2_values.size)


def make_suboptimal_ctdt(
    prob: MpcProblem, n: int, T: float, step: float | None = None
) -> CtDtSystem:
    """Interconnection applying n descent steps per sampling instant.

    The plant integrates the first input of the held sequence; the DT
    side performs warm-started gradient iterations on the horizon cost.
    Backed by the compiled update kernels.
    """
    cost = condense(prob)
    update = gradient_map(cost, step)
    bz = prob.ct_B @ prob.first_input_selector
    plan = _kernels.MpcPlan(
        A=prob.ct_A,
        Bz=bz,
        Hq=cost.Hq,
        F=cost.F,
        S=cost.S,
        M=cost.M,
        lb_stack=cost.lb_stack,
        ub_stack=cost.ub_stack,
        eta=update.step,
        gamma=float(prob.gamma),
    )
    ct_A = prob.ct_A

    def f(x: np.ndarray, z: np.ndarray) -> np.ndarray:
        return ct_A @ x + bz @ z

    return CtDtSystem(
        f=f,
        G=update,
        n=n,
        T=T,
        n_x=prob.n_x,
        n_z=prob.n_z,
        kernel=plan,
    )
