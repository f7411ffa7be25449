"""Zero-order-hold simulation and empirical estimation.

Simulation advances the CT state with classical fixed-step 4th-order
Runge-Kutta between sample instants and applies the n-fold DT update at
each instant kT using the state sampled there (sample-then-hold). The
hot loops live in ``_kernels`` (compiled when numba is enabled); systems
without an attached array-level plan fall back to a plain Python loop
with identical storage semantics.

Also here: log-linear decay-rate fitting, per-interval gain-matrix
checking between trajectory pairs, Monte Carlo Lipschitz-constant
estimation, and forward-invariance sweeps from boundary grids.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .certify import GainConstants
from .norms import WeightedNorm
from .systems import CtDtSystem

__all__ = [
    "Trajectory",
    "EstimatedConstants",
    "InvarianceReport",
    "simulate_ctdt",
    "simulate_batch",
    "empirical_decay_rate",
    "check_dtc_bound",
    "estimate_constants",
    "check_forward_invariance",
]

DIVERGENCE_THRESHOLD = 1e12
DEFAULT_SUBSTEPS = 100


@dataclass(frozen=True)
class Trajectory:
    """Stored ZOH run on the uniform grid t_i = i * (T / substeps).

    ``z_samples`` is piecewise constant: the value stored at a sample row
    is the freshly updated held input, repeated on the interior rows of
    the interval. ``sample_indices`` marks the rows with t = kT. A
    diverged run is truncated at the offending row.
    """

    times: np.ndarray
    x_samples: np.ndarray
    z_samples: np.ndarray
    sample_indices: np.ndarray
    T: float
    substeps: int
    diverged: bool

    @property
    def sample_times(self) -> np.ndarray:
        return self.times[self.sample_indices]

    @property
    def n_samples(self) -> int:
        return int(self.sample_indices.size)


@dataclass(frozen=True)
class EstimatedConstants:
    """Monte Carlo estimates of the interconnection constants.

    Each value is the maximum difference quotient seen over the sampled
    pairs, hence a lower bound on the true constant: use with headroom.
    ``margins`` holds, per constant, the relative gap between the largest
    and the 95th-percentile quotient (small gap = the maximum looks
    saturated rather than an outlier).
    """

    lip_x_f: float
    lip_z_f: float
    oslip_x_f: float
    lip_x_G: float
    lip_z_G: float
    num_samples: int
    fd_step: float
    margins: dict = field(repr=False)

    def as_gain_constants(self, rm_rate: float | None = None) -> GainConstants:
        return GainConstants(
            lip_x_f=self.lip_x_f,
            lip_z_f=self.lip_z_f,
            oslip_x_f=self.oslip_x_f,
            lip_x_G=self.lip_x_G,
            lip_z_G=self.lip_z_G,
            rm_rate=rm_rate,
        )


@dataclass(frozen=True)
class InvarianceReport:
    ok: bool
    runs: int
    exit_run: int | None = None
    exit_time: float | None = None
    exit_kind: str | None = None  # "x", "z" or "divergence"
    exit_start: np.ndarray | None = None


# ------------------------------------------------------------- simulation


def _simulate_python(sys, substeps, n_intervals, x0, z0, update_at_zero, div_sq):
    # mirror of the compiled kernels for systems without an array plan
    n_x, n_z = sys.dims
    n_rows = n_intervals * substeps + 1
    xs = np.zeros((n_rows, n_x))
    zs = np.zeros((n_rows, n_z))
    x = x0.copy()
    z = z0.copy()
    h = sys.T / substeps
    stored = 0
    f, G = sys.f, sys.G
    for k in range(n_intervals + 1):
        if k > 0 or update_at_zero:
            for _ in range(sys.n):
                z = np.asarray(G(x, z), dtype=float)
        xs[stored] = x
        zs[stored] = z
        stored += 1
        s = float(x @ x) + float(z @ z)
        if not np.isfinite(s) or s > div_sq:
            return xs, zs, stored, True
        if k == n_intervals:
            break
        for j in range(substeps):
            k1 = np.asarray(f(x, z), dtype=float)
            k2 = np.asarray(f(x + (0.5 * h) * k1, z), dtype=float)
            k3 = np.asarray(f(x + (0.5 * h) * k2, z), dtype=float)
            k4 = np.asarray(f(x + h * k3, z), dtype=float)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if j < substeps - 1:
                xs[stored] = x
                zs[stored] = z
                stored += 1
                s = float(x @ x)
                if not np.isfinite(s) or s > div_sq:
                    return xs, zs, stored, True
    return xs, zs, stored, False


def simulate_ctdt(
    sys: CtDtSystem,
    x0: np.ndarray,
    z0: np.ndarray,
    t_end: float,
    substeps: int = DEFAULT_SUBSTEPS,
    update_at_zero: bool = False,
    divergence_threshold: float = DIVERGENCE_THRESHOLD,
) -> Trajectory:
    """Run the interconnection under ZOH sampling up to (at least) t_end.

    The run covers ceil(t_end / T) full hold intervals, so it always ends
    on a sample instant and every kT <= t_end appears exactly once. At
    each sample instant the DT update uses the state sampled there, then
    the result is held over the interval; with ``update_at_zero`` the
    update is also applied at t = 0, otherwise z0 itself is held first.
    """
    if not t_end > 0.0:
        raise ValueError(f"t_end must be positive, got {t_end}")
    if substeps < 1 or int(substeps) != substeps:
        raise ValueError(f"substeps must be a positive integer, got {substeps}")
    x0 = np.ascontiguousarray(np.asarray(x0, dtype=np.float64))
    z0 = np.ascontiguousarray(np.asarray(z0, dtype=np.float64))
    n_x, n_z = sys.dims
    if x0.shape != (n_x,) or z0.shape != (n_z,):
        raise ValueError(
            f"initial condition shapes {x0.shape}/{z0.shape} do not match dims {sys.dims}"
        )
    substeps = int(substeps)
    n_intervals = max(1, int(math.ceil(t_end / sys.T - 1e-9)))
    div_sq = float(divergence_threshold) ** 2

    plan = sys.kernel
    if isinstance(plan, _kernels.AffinePlan):
        xs, zs, stored, diverged = _kernels.affine_zoh_rk4(
            plan.A, plan.B, plan.C, plan.D,
            sys.n, sys.T, substeps, n_intervals,
            x0, z0, update_at_zero, div_sq,
        )
    elif isinstance(plan, _kernels.MpcPlan):
        xs, zs, stored, diverged = _kernels.mpc_zoh_rk4(
            plan.A, plan.Bz, plan.Hq, plan.F, plan.S, plan.M,
            plan.lb_stack, plan.ub_stack, plan.eta, plan.gamma,
            sys.n, sys.T, substeps, n_intervals,
            x0, z0, update_at_zero, div_sq,
        )
    else:
        xs, zs, stored, diverged = _simulate_python(
            sys, substeps, n_intervals, x0, z0, update_at_zero, div_sq
        )

    dt = sys.T / substeps
    times = np.arange(stored) * dt
    sample_indices = np.arange(0, stored, substeps)
    return Trajectory(
        times=times,
        x_samples=xs[:stored],
        z_samples=zs[:stored],
        sample_indices=sample_indices,
        T=sys.T,
        substeps=substeps,
        diverged=bool(diverged),
    )


def simulate_batch(
    sys: CtDtSystem,
    initial_conditions,
    t_end: float,
    substeps: int = DEFAULT_SUBSTEPS,
    update_at_zero: bool = False,
    threads: int = 1,
) -> list[Trajectory]:
    """Simulate a list of (x0, z0) pairs, results ordered by run index.

    With ``threads`` > 1 runs execute on a thread pool; compiled kernels
    release the GIL, so this scales for array-plan systems. Ordering and
    content of the result are independent of the thread count.
    """
    runs = list(initial_conditions)

    def one(ic):
        x0, z0 = ic
        return simulate_ctdt(
            sys, x0, z0, t_end, substeps=substeps, update_at_zero=update_at_zero
        )

    if threads <= 1:
        return [one(ic) for ic in runs]
    with ThreadPoolExecutor(max_workers=int(threads)) as pool:
        return list(pool.map(one, runs))


# -------------------------------------------------------------- estimation


def _composite_norms(traj: Trajectory, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vx = np.linalg.norm(traj.x_samples[rows], axis=1)
    vz = np.linalg.norm(traj.z_samples[rows], axis=1)
    return vx, vz


def empirical_decay_rate(traj: Trajectory, norm: WeightedNorm | None = None) -> float:
    """Least-squares slope of ln||y(kT)|| over the sample instants.

    ``norm`` combines the pair (||x||_2, ||z||_2) into the composite
    norm; the default is the plain Euclidean combination. Negative slope
    means decay (this is the raw fitted exponent, not the positive-rate
    convention used by certificates).
    """
    idx = traj.sample_indices
    if idx.size < 10:
        raise ValueError(f"need at least 10 sample instants, got {idx.size}")
    vx, vz = _composite_norms(traj, idx)
    if norm is None:
        vals = np.hypot(vx, vz)
    else:
        vals = np.array([norm(np.array([a, b])) for a, b in zip(vx, vz)])
    if np.any(vals <= 0.0):
        raise ValueError("composite norm vanishes on a sample; rate undefined")
    slope = np.polyfit(traj.times[idx], np.log(vals), 1)[0]
    return float(slope)


def check_dtc_bound(
    traj_a: Trajectory,
    traj_b: Trajectory,
    gain: np.ndarray,
    norm_x: WeightedNorm | None = None,
    norm_z: WeightedNorm | None = None,
    slack: float = 1e-9,
) -> bool:
    """Entrywise per-interval check of a 2x2 gain matrix on a run pair.

    Stacks (||dx(kT)||, ||dz(kT)||) for the difference of the two runs
    and tests stack(k+1) <= gain @ stack(k) + slack at every k.
    """
    if traj_a.T != traj_b.T or traj_a.n_samples != traj_b.n_samples:
        raise ValueError("trajectories do not share a sample grid")
    if not np.array_equal(traj_a.sample_times, traj_b.sample_times):
        raise ValueError("trajectories do not share a sample grid")
    gain = np.asarray(gain, dtype=float)
    ia, ib = traj_a.sample_indices, traj_b.sample_indices
    dx = traj_a.x_samples[ia] - traj_b.x_samples[ib]
    dz = traj_a.z_samples[ia] - traj_b.z_samples[ib]
    if norm_x is None:
        nx = np.linalg.norm(dx, axis=1)
    else:
        nx = np.array([norm_x(row) for row in dx])
    if norm_z is None:
        nz = np.linalg.norm(dz, axis=1)
    else:
        nz = np.array([norm_z(row) for row in dz])
    stacked = np.column_stack([nx, nz])
    bound = stacked[:-1] @ gain.T + slack
    return bool(np.all(stacked[1:] <= bound))


def _uniform_in(rng, lo, hi, count):
    return lo + (hi - lo) * rng.random((count, lo.size))


def _unit_rows(rng, count, dim):
    v = rng.standard_normal((count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _max_with_margin(quotients):
    q = np.asarray(quotients, dtype=float)
    top = float(np.max(q)) if q.size else 0.0
    if q.size == 0 or top == 0.0:
        return top, 0.0
    p95 = float(np.quantile(q, 0.95))
    return top, (top - p95) / abs(top)


def estimate_constants(
    sys: CtDtSystem,
    x_box: tuple,
    z_box: tuple,
    num_samples: int = 20_000,
    fd_step: float = 0.01,
    seed: int = 0,
) -> EstimatedConstants:
    """Estimate the interconnection constants by sampled difference quotients.

    Half of each pair budget is independent uniform pairs in the box, the
    other half perturbation pairs of length ``fd_step`` around uniform
    centers (central differences; the local pairs capture derivative
    norms of smooth maps). Estimates are maxima, hence one-sided from
    below. Deterministic for a given seed.
    """
    x_lo = np.asarray(x_box[0], dtype=float)
    x_hi = np.asarray(x_box[1], dtype=float)
    z_lo = np.asarray(z_box[0], dtype=float)
    z_hi = np.asarray(z_box[1], dtype=float)
    if np.any(x_hi - x_lo <= fd_step) or np.any(z_hi - z_lo <= fd_step):
        raise ValueError("boxes must be wider than fd_step in every coordinate")
    rng = np.random.default_rng(seed)
    n_half = num_samples // 2
    n_rest = num_samples - n_half
    n_x, n_z = x_lo.size, z_lo.size

    def pairs(lo, hi, dim):
        a = _uniform_in(rng, lo, hi, n_half)
        b = _uniform_in(rng, lo, hi, n_half)
        centers = _uniform_in(rng, lo + fd_step / 2.0, hi - fd_step / 2.0, n_rest)
        dirs = _unit_rows(rng, n_rest, dim) * (fd_step / 2.0)
        return (
            np.vstack([a, centers + dirs]),
            np.vstack([b, centers - dirs]),
        )

    def anchors(lo, hi):
        return _uniform_in(rng, lo, hi, num_samples)

    f, G = sys.f, sys.G

    # Lip_x(f) and osLip_x(f) share the x-pair sweep at a common z
    x1, x2 = pairs(x_lo, x_hi, n_x)
    z_anchor = anchors(z_lo, z_hi)
    lip_x_f_q = np.zeros(num_samples)
    oslip_q = np.zeros(num_samples)
    for i in range(num_samples):
        dxv = x1[i] - x2[i]
        dfv = np.asarray(f(x1[i], z_anchor[i]), float) - np.asarray(
            f(x2[i], z_anchor[i]), float
        )
        dd = float(dxv @ dxv)
        lip_x_f_q[i] = math.sqrt(float(dfv @ dfv) / dd)
        oslip_q[i] = float(dfv @ dxv) / dd

    z1, z2 = pairs(z_lo, z_hi, n_z)
    x_anchor = anchors(x_lo, x_hi)
    lip_z_f_q = np.zeros(num_samples)
    for i in range(num_samples):
        dzv = z1[i] - z2[i]
        dfv = np.asarray(f(x_anchor[i], z1[i]), float) - np.asarray(
            f(x_anchor[i], z2[i]), float
        )
        lip_z_f_q[i] = math.sqrt(float(dfv @ dfv) / float(dzv @ dzv))

    x1g, x2g = pairs(x_lo, x_hi, n_x)
    z_anchor_g = anchors(z_lo, z_hi)
    lip_x_G_q = np.zeros(num_samples)
    for i in range(num_samples):
        dxv = x1g[i] - x2g[i]
        dgv = np.asarray(G(x1g[i], z_anchor_g[i]), float) - np.asarray(
            G(x2g[i], z_anchor_g[i]), float
        )
        lip_x_G_q[i] = math.sqrt(float(dgv @ dgv) / float(dxv @ dxv))

    z1g, z2g = pairs(z_lo, z_hi, n_z)
    x_anchor_g = anchors(x_lo, x_hi)
    lip_z_G_q = np.zeros(num_samples)
    for i in range(num_samples):
        dzv = z1g[i] - z2g[i]
        dgv = np.asarray(G(x_anchor_g[i], z1g[i]), float) - np.asarray(
            G(x_anchor_g[i], z2g[i]), float
        )
        lip_z_G_q[i] = math.sqrt(float(dgv @ dgv) / float(dzv @ dzv))

    vals = {}
    margins = {}
    for name, q in (
        ("lip_x_f", lip_x_f_q),
        ("lip_z_f", lip_z_f_q),
        ("lip_x_G", lip_x_G_q),
        ("lip_z_G", lip_z_G_q),
        ("oslip_x_f", oslip_q),
    ):
        vals[name], margins[name] = _max_with_margin(q)
    return EstimatedConstants(
        lip_x_f=vals["lip_x_f"],
        lip_z_f=vals["lip_z_f"],
        oslip_x_f=vals["oslip_x_f"],
        lip_x_G=vals["lip_x_G"],
        lip_z_G=vals["lip_z_G"],
        num_samples=int(num_samples),
        fd_step=float(fd_step),
        margins=margins,
    )


# ------------------------------------------------------- forward invariance


def _box_boundary_grid(lo: np.ndarray, hi: np.ndarray, density: int) -> np.ndarray:
    """Grid points on the boundary of an axis-aligned box."""
    d = lo.size
    if d == 1:
        return np.array([[lo[0]], [hi[0]]])
    axes = [np.linspace(lo[i], hi[i], density) for i in range(d)]
    pts = []
    for i in range(d):
        others = [axes[j] for j in range(d) if j != i]
        for val in (lo[i], hi[i]):
            for combo in itertools.product(*others):
                p = np.empty(d)
                p[i] = val
                rest = iter(combo)
                for j in range(d):
                    if j != i:
                        p[j] = next(rest)
                pts.append(p)
    return np.unique(np.array(pts), axis=0)


def _in_box(rows: np.ndarray, lo: np.ndarray, hi: np.ndarray, tol: float) -> np.ndarray:
    return np.all((rows >= lo - tol) & (rows <= hi + tol), axis=1)


def check_forward_invariance(
    sys: CtDtSystem,
    x0_box: tuple,
    z0_points,
    x_box: tuple,
    z_box: tuple,
    grid_density: int,
    t_end: float,
    substeps: int = DEFAULT_SUBSTEPS,
    update_at_zero: bool = False,
) -> tuple[bool, InvarianceReport]:
    """Simulate from a boundary grid of X0 x Z0 and watch for exits from X x Z.

    ``z0_points`` is either an explicit array of held initial inputs
    (shape (m, n_z) or a single point) or a (lo, hi) box whose boundary
    is gridded like X0. Divergence counts as an exit. Returns the overall
    verdict plus the first exit in run order.
    """
    x0_lo = np.asarray(x0_box[0], dtype=float)
    x0_hi = np.asarray(x0_box[1], dtype=float)
    x_lo = np.asarray(x_box[0], dtype=float)
    x_hi = np.asarray(x_box[1], dtype=float)
    z_lo = np.asarray(z_box[0], dtype=float)
    z_hi = np.asarray(z_box[1], dtype=float)
    if np.any(x0_lo < x_lo) or np.any(x0_hi > x_hi):
        raise ValueError("X0 must be contained in X")

    if isinstance(z0_points, tuple):
        z_starts = _box_boundary_grid(
            np.asarray(z0_points[0], float), np.asarray(z0_points[1], float), grid_density
        )
    else:
        z_starts = np.atleast_2d(np.asarray(z0_points, dtype=float))
    if np.any(z_starts < z_lo - 1e-12) or np.any(z_starts > z_hi + 1e-12):
        raise ValueError("Z0 must be contained in Z")

    x_starts = _box_boundary_grid(x0_lo, x0_hi, grid_density)
    tol = 1e-9 * max(1.0, float(np.max(np.abs(np.concatenate([x_hi, z_hi])))))

    run = 0
    for x0 in x_starts:
        for z0 in z_starts:
            traj = simulate_ctdt(
                sys, x0, z0, t_end, substeps=substeps, update_at_zero=update_at_zero
            )
            keep = traj.times <= t_end + 1e-12
            ok_x = _in_box(traj.x_samples[keep], x_lo, x_hi, tol)
            ok_z = _in_box(traj.z_samples[keep], z_lo, z_hi, tol)
            bad = ~(ok_x & ok_z)
            if traj.diverged or np.any(bad):
                if np.any(bad):
                    row = int(np.argmax(bad))
                    kind = "x" if not ok_x[row] else "z"
                    t_exit = float(traj.times[keep][row])
                else:
                    row = traj.times.size - 1
                    kind = "divergence"
                    t_exit = float(traj.times[row])
                report = InvarianceReport(
                    ok=False,
                    runs=run + 1,
                    exit_run=run,
                    exit_time=t_exit,
                    exit_kind=kind,
                    exit_start=np.concatenate([x0, z0]),
                )
                return False, report
            run += 1
    return True, InvarianceReport(ok=True, runs=run)
