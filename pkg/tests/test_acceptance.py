"""Acceptance criteria: one test per criterion, timed against its budget.

Each test prints the measured quantities it asserts on, so a failing
line carries the observed value alongside the required tolerance.
Kernel compilation happens once up front and is excluded from budgets.
"""

import math
import time

import numpy as np
import pytest

from ctdtkit import _kernels
from ctdtkit.certify import (
    bound_matrix_B,
    gain_matrix_rm,
    gain_matrix_smallgain,
    GainConstants,
    lti_constants,
    rm_sufficient_margin,
    sampling_bound_Tn,
    scalar_sample_multiplier,
    transient_constants_smallgain,
)
from ctdtkit.mpc import (
    double_integrator_problem,
    make_suboptimal_ctdt,
    rm_lognorm_contour,
    unconstrained_gain,
)
from ctdtkit.norms import (
    WeightedNorm,
    h_kernel,
    log_norm_2_weighted,
    perron_weights,
    spectral_abscissa,
    spectral_radius,
)
from ctdtkit.simulate import (
    _box_boundary_grid,
    check_dtc_bound,
    check_forward_invariance,
    empirical_decay_rate,
    simulate_batch,
    simulate_ctdt,
)
from ctdtkit.systems import LtiSystem, lti_reduced_matrix, make_lti_ctdt, zoh_discretize


@pytest.fixture(scope="module", autouse=True)
def compiled_kernels():
    _kernels.warmup()


def elapsed(t0: float) -> float:
    return time.perf_counter() - t0


def unit_norm_ic(seed: int, dim: int) -> np.ndarray:
    v = np.random.default_rng(seed).uniform(0.0, 1.0, dim)
    return v / np.linalg.norm(v)


def exact_sample_recursion(lti, n, T, x0, z0, n_intervals):
    Ad, Bd = zoh_discretize(lti.A, lti.B, T)
    xs = [np.asarray(x0, float)]
    z = np.asarray(z0, float)
    for k in range(n_intervals):
        if k > 0:
            for _ in range(n):
                z = lti.C @ xs[-1] + lti.D @ z
        xs.append(Ad @ xs[-1] + Bd @ z)
    return np.array(xs)


def small_gain_lti(rng):
    """Random interconnection satisfying the small-gain inequality."""
    A0 = rng.standard_normal((2, 2))
    mu0 = float(np.max(np.linalg.eigvalsh(0.5 * (A0 + A0.T))))
    delta = rng.uniform(0.5, 2.0)
    A = A0 - (mu0 + delta) * np.eye(2)
    D = np.array([[rng.uniform(0.1, 0.6)]])
    B0 = rng.standard_normal((2, 1))
    C0 = rng.standard_normal((1, 2))
    s = math.sqrt(
        rng.uniform(0.1, 0.8) * delta * (1.0 - D[0, 0])
        / (np.linalg.norm(B0, 2) * np.linalg.norm(C0, 2))
    )
    return LtiSystem(A=A, B=s * B0, C=s * C0, D=D)


def test_criterion_01_closed_loop_matrix_entries():
    t0 = time.perf_counter()
    prob = double_integrator_problem(delta=0.2, horizon=5)
    _, a_cl = unconstrained_gain(prob)
    target = np.array([[0.0, 1.0], [-0.8412, -1.5460]])
    err = float(np.max(np.abs(a_cl - target)))
    dt = elapsed(t0)
    print(f"criterion 1: closed loop {a_cl.tolist()} max entry error {err:.2e} ({dt:.2f}s)")
    assert err <= 1e-3
    assert dt < 1.0


def test_criterion_02_closed_loop_log_norm_and_abscissa():
    t0 = time.perf_counter()
    prob = double_integrator_problem()
    _, a_cl = unconstrained_gain(prob)
    mu = log_norm_2_weighted(a_cl, prob.P)
    alpha = spectral_abscissa(a_cl)
    dt = elapsed(t0)
    print(f"criterion 2: weighted log norm {mu:.6f}, abscissa {alpha:.6f} ({dt:.2f}s)")
    assert abs(mu - (-0.4407)) <= 1e-3
    assert abs(alpha - (-0.7730)) <= 1e-3
    assert dt < 1.0


def test_criterion_03_single_iteration_stability():
    t0 = time.perf_counter()
    sys_obj = make_suboptimal_ctdt(double_integrator_problem(), n=1, T=0.1)
    ics = [(unit_norm_ic(9000 + k, 2), np.zeros(5)) for k in range(100)]
    trajs = simulate_batch(sys_obj, ics, 20.0, substeps=20, threads=4)
    rates = np.array([empirical_decay_rate(t) for t in trajs])
    dt = elapsed(t0)
    print(
        f"criterion 3: {int(np.sum(rates < -0.01))}/100 rates below -0.01, "
        f"max {rates.max():.4f} ({dt:.2f}s)"
    )
    assert np.all(rates < -0.01)
    assert dt < 30.0


def test_criterion_04_instability_appears_at_large_period():
    t0 = time.perf_counter()
    prob = double_integrator_problem()
    ics = [(unit_norm_ic(9200 + k, 2), np.zeros(5)) for k in range(3)]
    first_diverging = None
    for T in np.arange(0.5, 5.01, 0.5):
        sys_obj = make_suboptimal_ctdt(prob, n=1, T=float(T))
        trajs = simulate_batch(sys_obj, ics, 400.0, substeps=10, threads=3)
        if any(t.diverged for t in trajs):
            first_diverging = float(T)
            break
    dt = elapsed(t0)
    # the threshold itself is recorded, not asserted
    print(f"criterion 4: first diverging period T = {first_diverging} ({dt:.2f}s)")
    assert first_diverging is not None and first_diverging <= 5.0
    assert dt < 60.0


def test_criterion_05_soft_constrained_invariance():
    t0 = time.perf_counter()
    prob = double_integrator_problem(gamma=10.0)
    sys_obj = make_suboptimal_ctdt(prob, n=1, T=0.02)
    x0_lo = np.array([-10.0, -3.0])
    x0_hi = np.array([10.0, 3.0])
    ok, report = check_forward_invariance(
        sys_obj,
        x0_box=(x0_lo, x0_hi),
        z0_points=np.zeros((1, 5)),
        x_box=(np.array([-20.0, -6.0]), np.array([20.0, 6.0])),
        z_box=(np.full(5, -1e12), np.full(5, 1e12)),
        grid_density=21,
        t_end=20.0,
        substeps=10,
    )
    boundary = _box_boundary_grid(x0_lo, x0_hi, 21)
    trajs = simulate_batch(
        sys_obj, [(p, np.zeros(5)) for p in boundary], 20.0, substeps=10, threads=4
    )
    rates = np.array([empirical_decay_rate(t) for t in trajs])
    dt = elapsed(t0)
    print(
        f"criterion 5: invariant={ok} over {report.runs} boundary starts "
        f"(>= 80 required), max rate {rates.max():.4f} ({dt:.2f}s)"
    )
    assert report.runs >= 80
    assert ok
    assert np.all(rates < 0.0)
    assert dt < 60.0


def test_criterion_06_contour_signs_across_penalty_weights():
    t0 = time.perf_counter()
    x1 = np.linspace(-20.0, 20.0, 51)
    x2 = np.linspace(-6.0, 6.0, 51)
    flat = rm_lognorm_contour(double_integrator_problem(gamma=0.0), x1, x2, threads=4)
    spread = float(np.max(np.abs(flat - (-0.4407))))
    grid10 = rm_lognorm_contour(double_integrator_problem(gamma=10.0), x1, x2, threads=4)
    origin = float(grid10[25, 25])
    grid100 = rm_lognorm_contour(double_integrator_problem(gamma=100.0), x1, x2, threads=4)
    nonneg = int(np.sum(grid100 >= 0.0))
    dt = elapsed(t0)
    print(
        f"criterion 6: flat-field deviation {spread:.2e}, origin value {origin:.4f}, "
        f"{nonneg} nonnegative cells at heavy penalty ({dt:.2f}s)"
    )
    assert spread <= 2e-3
    assert origin < 0.0
    assert nonneg >= 1
    assert dt < 300.0


def test_criterion_07_small_gain_makes_every_gain_matrix_schur():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20260901)
    count = 10_000
    L = rng.uniform(0.01, 0.99, count)
    lzf = rng.uniform(0.01, 5.0, count)
    lxg = rng.uniform(0.01, 5.0, count)
    slack = rng.uniform(1.001, 50.0, count)
    xi = -slack * lzf * lxg / (1.0 - L)
    n = rng.integers(1, 21, count)
    T = rng.uniform(1e-6, 10.0, count)
    gsum = (1.0 - L**n) / (1.0 - L)
    h = np.expm1(xi * T) / xi
    a11 = np.exp(xi * T)
    a12 = lzf * h
    a21 = gsum * lxg * a11
    a22 = gsum * lxg * lzf * h + L**n
    disc = np.sqrt((a11 - a22) ** 2 + 4.0 * a12 * a21)
    rho = 0.5 * (a11 + a22 + disc)
    worst = float(np.max(rho))
    # spot check the closed form against the implementation
    for idx in range(0, count, 1009):
        g = GainConstants(
            lip_x_f=1.0, lip_z_f=lzf[idx], oslip_x_f=xi[idx],
            lip_x_G=lxg[idx], lip_z_G=L[idx],
        )
        mat = gain_matrix_smallgain(g, int(n[idx]), float(T[idx]))
        np.testing.assert_allclose(spectral_radius(mat), rho[idx], rtol=1e-10)
    dt = elapsed(t0)
    print(f"criterion 7: {count} bundles, max spectral radius {worst:.6f} ({dt:.2f}s)")
    assert worst < 1.0
    assert dt < 10.0


def test_criterion_08_sampling_bound_brackets_the_schur_frontier():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20260902)
    checked = 0
    attempts = 0
    while checked < 1000:
        attempts += 1
        assert attempts < 60_000
        g = GainConstants(
            lip_x_f=rng.uniform(0.05, 3.0),
            lip_z_f=rng.uniform(0.05, 3.0),
            oslip_x_f=rng.uniform(-3.0, 3.0),
            lip_x_G=rng.uniform(0.05, 3.0),
            lip_z_G=rng.uniform(0.05, 0.95),
            rm_rate=rng.uniform(0.1, 3.0),
        )
        n = int(rng.integers(1, 11))
        tn = sampling_bound_Tn(g, n)
        if not math.isfinite(tn) or tn > 50.0:
            continue
        below = rm_sufficient_margin(g, n, 0.99 * tn)
        above = rm_sufficient_margin(g, n, 1.01 * tn)
        assert below < 0.0
        assert above > 0.0
        assert spectral_radius(gain_matrix_rm(g, n, 0.99 * tn)) < 1.0
        checked += 1
    dt = elapsed(t0)
    print(f"criterion 8: {checked} bundles bracket their bound ({dt:.2f}s)")
    assert dt < 10.0


def test_criterion_09_small_gain_forces_contractive_reduced_model():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20260903)
    worst = -math.inf
    for _ in range(1000):
        sys_obj = small_gain_lti(rng)
        worst = max(worst, log_norm_2_weighted(lti_reduced_matrix(sys_obj)))
    dt = elapsed(t0)
    print(f"criterion 9: 1000 systems, max RM log norm {worst:.6f} ({dt:.2f}s)")
    assert worst < 0.0
    assert dt < 10.0


def test_criterion_10_integrator_matches_exact_discretization():
    t0 = time.perf_counter()
    lti = LtiSystem(
        A=np.array([[-1.0, 0.3], [-0.2, -1.2]]),
        B=np.array([[0.25], [0.1]]),
        C=np.array([[0.3, 0.2]]),
        D=np.array([[0.4]]),
    )
    T, n = 0.5, 2
    sys_obj = make_lti_ctdt(lti, n=n, T=T)
    x0 = np.array([1.0, -1.5])
    z0 = np.array([0.8])
    xs_exact = exact_sample_recursion(lti, n, T, x0, z0, 20)

    def max_err(substeps):
        traj = simulate_ctdt(sys_obj, x0, z0, 10.0, substeps=substeps)
        return float(
            np.max(np.linalg.norm(traj.x_samples[traj.sample_indices] - xs_exact, axis=1))
        )

    err100 = max_err(100)
    ratio = max_err(25) / max_err(50)
    dt = elapsed(t0)
    print(
        f"criterion 10: sample error {err100:.2e} at 100 substeps, "
        f"halving ratio {ratio:.2f} ({dt:.2f}s)"
    )
    assert err100 <= 1e-6
    assert 12.0 <= ratio <= 20.0
    assert dt < 10.0


def test_criterion_11_scalar_example_multiplier_and_threshold():
    t0 = time.perf_counter()
    a, b, c, d = 1.0, 1.0, -3.0, 0.0
    lti = LtiSystem(
        A=np.array([[a]]), B=np.array([[b]]), C=np.array([[c]]), D=np.array([[d]])
    )
    worst_rel = 0.0
    for T in (0.5, 0.9, 1.2):
        sys_obj = make_lti_ctdt(lti, n=1, T=T)
        traj = simulate_ctdt(sys_obj, np.array([1.0]), np.zeros(1), 10 * T, substeps=200)
        xs = traj.x_samples[traj.sample_indices][:, 0]
        ratios = xs[2:] / xs[1:-1]  # first interval still holds z0
        mult = scalar_sample_multiplier(a, b, c, d, T)
        worst_rel = max(worst_rel, float(np.max(np.abs(ratios - mult) / abs(mult))))
    threshold_mult = scalar_sample_multiplier(a, b, c, d, math.log(2.5))
    dt = elapsed(t0)
    print(
        f"criterion 11: worst ratio error {worst_rel:.2e}, multiplier at the "
        f"threshold {threshold_mult:.12f} ({dt:.2f}s)"
    )
    assert worst_rel <= 1e-6
    assert abs(threshold_mult - (-2.0)) <= 1e-9
    assert dt < 1.0


def test_criterion_12_no_violations_in_the_bound_suites():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20260904)
    slack = 1e-6
    counts = {}

    # iterated-update gains: n-fold composition contracts like the
    # matrix geometric series
    bad = 0
    for _ in range(1000):
        n_z = int(rng.integers(1, 4))
        n_x = int(rng.integers(1, 4))
        D = rng.standard_normal((n_z, n_z))
        D *= rng.uniform(0.05, 0.95) / np.linalg.norm(D, 2)
        C = rng.standard_normal((n_z, n_x))
        dn = np.linalg.norm(D, 2)
        n = int(rng.integers(1, 11))
        acc = np.zeros_like(C)
        power = np.eye(n_z)
        for _ in range(n):
            acc += power @ C
            power = power @ D
        lhs_x = np.linalg.norm(acc, 2)
        rhs_x = np.linalg.norm(C, 2) * (1.0 - dn**n) / (1.0 - dn)
        lhs_z = np.linalg.norm(power, 2)
        if lhs_x > rhs_x * (1 + slack) or lhs_z > dn**n * (1 + slack):
            bad += 1
    counts["iterated-update gains"] = bad

    # fixed-point sensitivity: the limit map inherits the same quotient
    bad = 0
    for _ in range(1000):
        n_z = int(rng.integers(1, 4))
        D = rng.standard_normal((n_z, n_z))
        D *= rng.uniform(0.05, 0.95) / np.linalg.norm(D, 2)
        C = rng.standard_normal((n_z, 2))
        lhs = np.linalg.norm(np.linalg.solve(np.eye(n_z) - D, C), 2)
        rhs = np.linalg.norm(C, 2) / (1.0 - np.linalg.norm(D, 2))
        if lhs > rhs * (1 + slack):
            bad += 1
    counts["fixed-point sensitivity"] = bad

    # constant-input state envelope on trajectory pairs
    bad = 0
    for _ in range(1000):
        n_x = int(rng.integers(1, 4))
        n_z = int(rng.integers(1, 3))
        A = rng.standard_normal((n_x, n_x))
        B = rng.standard_normal((n_x, n_z))
        lti = LtiSystem(A=A, B=B, C=np.zeros((n_z, n_x)), D=np.eye(n_z))
        sys_obj = make_lti_ctdt(lti, n=1, T=0.25)
        xi = log_norm_2_weighted(A)
        lzf = float(np.linalg.norm(B, 2))
        x0a, x0b = rng.standard_normal(n_x), rng.standard_normal(n_x)
        ua, ub = rng.standard_normal(n_z), rng.standard_normal(n_z)
        ta = simulate_ctdt(sys_obj, x0a, ua, 1.0, substeps=20)
        tb = simulate_ctdt(sys_obj, x0b, ub, 1.0, substeps=20)
        gaps = np.linalg.norm(ta.x_samples - tb.x_samples, axis=1)
        gap0 = np.linalg.norm(x0a - x0b)
        du = np.linalg.norm(ua - ub)
        env = np.array(
            [math.exp(xi * t) * gap0 + lzf * h_kernel(t, xi) * du for t in ta.times]
        )
        if np.any(gaps > env + slack):
            bad += 1
    counts["input-state envelope"] = bad

    # intra-interval drift against the kernel-weighted anchor norms
    bad = 0
    for _ in range(1000):
        sys_lti = small_gain_lti(rng)
        g = lti_constants(sys_lti)
        T = float(rng.uniform(0.1, 0.5))
        sys_obj = make_lti_ctdt(sys_lti, n=1, T=T)
        traj = simulate_ctdt(
            sys_obj, rng.standard_normal(2), rng.standard_normal(1), 2 * T, substeps=50
        )
        hT = h_kernel(T, g.oslip_x_f)
        si = traj.sample_indices
        for k in range(si.size - 1):
            ax = traj.x_samples[si[k]]
            az = traj.z_samples[si[k]]
            cap = hT * (g.lip_x_f * np.linalg.norm(ax) + g.lip_z_f * np.linalg.norm(az))
            drift = np.linalg.norm(traj.x_samples[si[k] : si[k + 1]] - ax, axis=1)
            if np.any(drift > cap + slack):
                bad += 1
                break
    counts["intra-interval drift"] = bad

    # per-interval bound matrix on stacked norms of trajectory pairs
    bad = 0
    for _ in range(1000):
        sys_lti = small_gain_lti(rng)
        g = lti_constants(sys_lti)
        T = float(rng.uniform(0.1, 0.5))
        Bm = bound_matrix_B(g, T)
        sys_obj = make_lti_ctdt(sys_lti, n=int(rng.integers(1, 4)), T=T)
        ta = simulate_ctdt(
            sys_obj, rng.standard_normal(2), rng.standard_normal(1), 4 * T, substeps=25
        )
        tb = simulate_ctdt(
            sys_obj, rng.standard_normal(2), rng.standard_normal(1), 4 * T, substeps=25
        )
        dx = np.linalg.norm(ta.x_samples - tb.x_samples, axis=1)
        dz = np.linalg.norm(ta.z_samples - tb.z_samples, axis=1)
        si = ta.sample_indices
        for k in range(si.size - 1):
            cap = Bm @ np.array([dx[si[k]], dz[si[k]]])
            rows = slice(si[k], si[k + 1])
            if np.any(dx[rows] > cap[0] + slack) or np.any(dz[rows] > cap[1] + slack):
                bad += 1
                break
    counts["per-interval bound matrix"] = bad

    # transient envelope in the Perron-weighted composite norm whenever
    # the per-interval gain check passes
    bad = 0
    for _ in range(1000):
        sys_lti = small_gain_lti(rng)
        g = lti_constants(sys_lti)
        n = int(rng.integers(1, 4))
        T = float(rng.uniform(0.1, 0.5))
        gain = gain_matrix_smallgain(g, n, T)
        r, rate = transient_constants_smallgain(g, n, T)
        cmp_norm = WeightedNorm(p=2, weights=perron_weights(gain))
        b = math.exp(-rate * T)
        sys_obj = make_lti_ctdt(sys_lti, n=n, T=T)
        ta = simulate_ctdt(
            sys_obj, rng.standard_normal(2), rng.standard_normal(1), 6 * T, substeps=30
        )
        tb = simulate_ctdt(
            sys_obj, rng.standard_normal(2), rng.standard_normal(1), 6 * T, substeps=30
        )
        if not check_dtc_bound(ta, tb, gain, slack=1e-8):
            bad += 1
            continue
        dx = np.linalg.norm(ta.x_samples - tb.x_samples, axis=1)
        dz = np.linalg.norm(ta.z_samples - tb.z_samples, axis=1)
        y = np.array([cmp_norm(np.array([dx[i], dz[i]])) for i in range(dx.size)])
        env = r * b ** (ta.times / T) * y[0]
        if np.any(y > env * (1 + slack) + 1e-9):
            bad += 1
    counts["transient envelope"] = bad

    dt = elapsed(t0)
    summary = ", ".join(f"{k}: {v}" for k, v in counts.items())
    print(f"criterion 12: violations per suite -> {summary} ({dt:.2f}s)")
    assert all(v == 0 for v in counts.values())
    assert dt < 60.0
