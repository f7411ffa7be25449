"""System abstractions: composition, fixed points, reduced models, ZOH.

Discretization answers are checked against a truncated power-series
oracle written here, independent of the augmented-exponential
implementation.
"""

import math

import numpy as np
import pytest

from ctdtkit.systems import (
    CtDtSystem,
    LtiSystem,
    compose_G,
    fixed_point_zstar,
    lti_reduced_matrix,
    make_lti_ctdt,
    reduced_model,
    zoh_discretize,
)

# ---------------------------------------------------------------- oracles


def zoh_series_oracle(A, B, delta, terms=60):
    """Power-series oracle: e^{A d} and sum_k A^k d^{k+1}/(k+1)! B."""
    n = A.shape[0]
    Ad = np.zeros_like(A)
    S = np.zeros_like(A)
    P = np.eye(n)
    fact = 1.0
    for k in range(terms):
        Ad = Ad + P * (delta**k) / fact
        S = S + P * (delta ** (k + 1)) / (fact * (k + 1))
        P = P @ A
        fact *= k + 1
    return Ad, S @ B


def affine_compose_oracle(C, D, x, z, n):
    # z_n = sum_{i<n} D^i C x + D^n z, accumulated term by term
    acc = np.zeros_like(z)
    Di = np.eye(D.shape[0])
    for _ in range(n):
        acc = acc + Di @ C @ x
        Di = Di @ D
    return acc + Di @ z


def random_lti(rng, n_x, n_z, d_norm):
    A = rng.standard_normal((n_x, n_x))
    B = rng.standard_normal((n_x, n_z))
    C = rng.standard_normal((n_z, n_x))
    D = rng.standard_normal((n_z, n_z))
    D = D * (d_norm / np.linalg.norm(D, 2))
    return LtiSystem(A=A, B=B, C=C, D=D)


# ---------------------------------------------------------- construction


def test_ctdt_rejects_unnormalized_origin():
    # f(0,0) must vanish
    with pytest.raises(ValueError):
        CtDtSystem(
            f=lambda x, z: x + 1.0,
            G=lambda x, z: 0.0 * z,
            n=1,
            T=0.1,
            n_x=1,
            n_z=1,
        )
    with pytest.raises(ValueError):
        CtDtSystem(
            f=lambda x, z: 0.0 * x,
            G=lambda x, z: z + 2.0,
            n=1,
            T=0.1,
            n_x=1,
            n_z=1,
        )


def test_ctdt_rejects_bad_n_and_T():
    f = lambda x, z: 0.0 * x
    G = lambda x, z: 0.0 * z
    with pytest.raises(ValueError):
        CtDtSystem(f=f, G=G, n=0, T=0.1, n_x=1, n_z=1)
    with pytest.raises(ValueError):
        CtDtSystem(f=f, G=G, n=1, T=0.0, n_x=1, n_z=1)


def test_lti_shape_validation():
    with pytest.raises(ValueError):
        LtiSystem(
            A=np.eye(2),
            B=np.ones((3, 1)),
            C=np.ones((1, 2)),
            D=np.zeros((1, 1)),
        )


# ---------------------------------------------------------- composition


def test_compose_single_step_is_the_map_itself():
    sys = make_lti_ctdt(
        LtiSystem(A=-np.eye(2), B=np.ones((2, 1)), C=np.ones((1, 2)), D=0.5 * np.eye(1)),
        n=1,
        T=0.1,
    )
    x = np.array([1.0, -2.0])
    z = np.array([0.3])
    np.testing.assert_allclose(compose_G(sys, x, z, 1), sys.G(x, z))


def test_compose_matches_affine_unrolling():
    rng = np.random.default_rng(11)
    for _ in range(25):
        lti = random_lti(rng, n_x=3, n_z=2, d_norm=0.8)
        sys = make_lti_ctdt(lti, n=3, T=0.1)
        x = rng.standard_normal(3)
        z = rng.standard_normal(2)
        got = compose_G(sys, x, z, 3)
        want = affine_compose_oracle(lti.C, lti.D, x, z, 3)
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


def test_compose_leaves_fixed_point_alone():
    lti = LtiSystem(
        A=-np.eye(2), B=np.ones((2, 2)), C=0.3 * np.ones((2, 2)), D=0.4 * np.eye(2)
    )
    sys = make_lti_ctdt(lti, n=1, T=0.1)
    x = np.array([1.0, 2.0])
    z_star = np.linalg.solve(np.eye(2) - lti.D, lti.C @ x)
    for n in (1, 4, 9):
        np.testing.assert_allclose(compose_G(sys, x, z_star, n), z_star, atol=1e-12)


@pytest.mark.filterwarnings("ignore:overflow")
def test_compose_raises_on_nonfinite():
    sys = CtDtSystem(
        f=lambda x, z: 0.0 * x,
        G=lambda x, z: 1e200 * z + 1e200 * x,
        n=1,
        T=0.1,
        n_x=1,
        n_z=1,
    )
    with pytest.raises(FloatingPointError):
        compose_G(sys, np.array([1.0]), np.array([1.0]), 3)


# ---------------------------------------------------------- fixed points


def test_fixed_point_matches_linear_solve():
    rng = np.random.default_rng(7)
    for _ in range(20):
        lti = random_lti(rng, n_x=4, n_z=3, d_norm=0.7)
        sys = make_lti_ctdt(lti, n=1, T=0.1)
        x = rng.standard_normal(4)
        res = fixed_point_zstar(sys, x)
        assert res.converged
        assert res.residual <= 1e-12
        want = np.linalg.solve(np.eye(3) - lti.D, lti.C @ x)
        np.testing.assert_allclose(res.z_star, want, atol=1e-10)


def test_fixed_point_at_origin_is_zero():
    lti = LtiSystem(A=-np.eye(2), B=np.ones((2, 1)), C=np.ones((1, 2)), D=0.5 * np.eye(1))
    sys = make_lti_ctdt(lti, n=1, T=0.1)
    res = fixed_point_zstar(sys, np.zeros(2))
    np.testing.assert_allclose(res.z_star, 0.0, atol=1e-15)


def test_fixed_point_scalar_instance():
    # a=1, b=1, c=-3, d=0: z*(x) = -3x, so x=2 gives -6
    lti = LtiSystem(
        A=np.array([[1.0]]),
        B=np.array([[1.0]]),
        C=np.array([[-3.0]]),
        D=np.array([[0.0]]),
    )
    sys = make_lti_ctdt(lti, n=1, T=0.1)
    res = fixed_point_zstar(sys, np.array([2.0]))
    np.testing.assert_allclose(res.z_star, [-6.0], atol=1e-12)
    # d = 0 makes a single iteration exact
    assert res.iterations <= 2


def test_fixed_point_independent_of_start():
    lti = LtiSystem(
        A=-np.eye(2),
        B=np.ones((2, 2)),
        C=0.5 * np.ones((2, 2)),
        D=np.array([[0.2, 0.3], [0.1, 0.4]]),
    )
    sys = make_lti_ctdt(lti, n=1, T=0.1)
    x = np.array([0.7, -1.1])
    a = fixed_point_zstar(sys, x, z0=np.zeros(2))
    b = fixed_point_zstar(sys, x, z0=np.array([50.0, -80.0]))
    np.testing.assert_allclose(a.z_star, b.z_star, atol=1e-10)


def test_fixed_point_residual_decays_geometrically():
    # for an affine contraction the residual contracts by at least
    # Lip_z(G) every iteration, so after k steps it is <= L^{k-1} r0
    lti = LtiSystem(
        A=-np.eye(2),
        B=np.ones((2, 2)),
        C=np.ones((2, 2)),
        D=np.array([[0.5, 0.1], [0.0, 0.6]]),
    )
    L = np.linalg.norm(lti.D, 2)
    assert L < 1.0
    sys = make_lti_ctdt(lti, n=1, T=0.1)
    x = np.array([1.0, 2.0])
    z0 = np.array([10.0, -10.0])
    r0 = float(np.linalg.norm(sys.G(x, z0) - z0))
    for k in (2, 5, 10, 20):
        res = fixed_point_zstar(sys, x, z0=z0, tol=0.0, max_iter=k)
        assert res.residual <= L ** (k - 1) * r0 * (1.0 + 1e-9)


def test_fixed_point_budget_exhaustion_reports():
    lti = LtiSystem(
        A=-np.eye(1), B=np.ones((1, 1)), C=np.ones((1, 1)), D=np.array([[0.999]])
    )
    sys = make_lti_ctdt(lti, n=1, T=0.1)
    res = fixed_point_zstar(sys, np.array([1.0]), max_iter=5)
    assert not res.converged
    assert res.iterations == 5
    assert res.residual > 1e-12


@pytest.mark.filterwarnings("ignore:overflow")
def test_fixed_point_flags_divergence():
    sys = CtDtSystem(
        f=lambda x, z: 0.0 * x,
        G=lambda x, z: 1e160 * z + x,
        n=1,
        T=1.0,
        n_x=1,
        n_z=1,
    )
    res = fixed_point_zstar(sys, np.array([1.0]), z0=np.array([1.0]), max_iter=50)
    assert not res.converged
    assert math.isinf(res.residual)


# ---------------------------------------------------------- reduced model


def test_reduced_model_matches_explicit_matrix():
    rng = np.random.default_rng(23)
    for _ in range(10):
        lti = random_lti(rng, n_x=3, n_z=2, d_norm=0.6)
        sys = make_lti_ctdt(lti, n=1, T=0.1)
        rm = reduced_model(sys)
        M = lti_reduced_matrix(lti)
        for _ in range(5):
            x = rng.standard_normal(3)
            np.testing.assert_allclose(rm(x), M @ x, atol=1e-10)


def test_reduced_model_vanishes_at_origin():
    lti = LtiSystem(A=-np.eye(2), B=np.ones((2, 1)), C=np.ones((1, 2)), D=0.5 * np.eye(1))
    rm = reduced_model(make_lti_ctdt(lti, n=1, T=0.1))
    np.testing.assert_allclose(rm(np.zeros(2)), 0.0, atol=1e-13)


def test_reduced_model_scalar_instance():
    # a=1, b=1, c=-3, d=0 collapses to xdot = -2x
    lti = LtiSystem(
        A=np.array([[1.0]]),
        B=np.array([[1.0]]),
        C=np.array([[-3.0]]),
        D=np.array([[0.0]]),
    )
    rm = reduced_model(make_lti_ctdt(lti, n=1, T=0.5))
    np.testing.assert_allclose(rm(np.array([2.0])), [-4.0], atol=1e-12)
    np.testing.assert_allclose(lti_reduced_matrix(lti), [[-2.0]], atol=1e-15)


def test_reduced_model_failure_propagates():
    sys = CtDtSystem(
        f=lambda x, z: 0.0 * x,
        G=lambda x, z: 0.999999 * z + x,
        n=1,
        T=1.0,
        n_x=1,
        n_z=1,
    )
    rm = reduced_model(sys)
    # contraction factor too close to 1 for the default budget at 1e-12
    with pytest.raises(RuntimeError):
        rm(np.array([1.0]))


def test_lti_reduced_matrix_singular_coupling():
    lti = LtiSystem(A=np.eye(1), B=np.eye(1), C=np.eye(1), D=np.eye(1))
    with pytest.raises(ValueError):
        lti_reduced_matrix(lti)


# ------------------------------------------------------------------- zoh


def test_zoh_double_integrator_closed_form():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    Ad, Bd = zoh_discretize(A, B, 0.2)
    np.testing.assert_allclose(Ad, [[1.0, 0.2], [0.0, 1.0]], atol=1e-14)
    np.testing.assert_allclose(Bd, [[0.02], [0.2]], atol=1e-14)


def test_zoh_zero_dynamics():
    B = np.array([[1.0], [2.0]])
    Ad, Bd = zoh_discretize(np.zeros((2, 2)), B, 0.7)
    np.testing.assert_allclose(Ad, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(Bd, 0.7 * B, atol=1e-15)


def test_zoh_scalar_closed_form():
    Ad, Bd = zoh_discretize(np.array([[1.0]]), np.array([[1.0]]), 1.0)
    np.testing.assert_allclose(Ad, [[math.e]], rtol=1e-14)
    np.testing.assert_allclose(Bd, [[math.e - 1.0]], rtol=1e-14)


def test_zoh_matches_series_oracle():
    rng = np.random.default_rng(5)
    for _ in range(20):
        n = int(rng.integers(1, 5))
        A = rng.standard_normal((n, n))
        A = A / max(1.0, np.linalg.norm(A, 2) / 2.0)  # keep ||A|| <= 2
        B = rng.standard_normal((n, 2))
        delta = float(rng.uniform(0.01, 1.0))
        Ad, Bd = zoh_discretize(A, B, delta)
        Ad_o, Bd_o = zoh_series_oracle(A, B, delta)
        np.testing.assert_allclose(Ad, Ad_o, rtol=1e-11, atol=1e-13)
        np.testing.assert_allclose(Bd, Bd_o, rtol=1e-11, atol=1e-13)


def test_zoh_rejects_nonpositive_step():
    with pytest.raises(ValueError):
        zoh_discretize(np.eye(1), np.eye(1), 0.0)


# ----------------------------------------------- iterated-map gain bounds


def test_iterated_map_gain_bounds():
    # n-fold affine composition: state gain bounded by the geometric sum,
    # carried-input gain bounded by the norm power
    rng = np.random.default_rng(31)
    for _ in range(200):
        n_z = int(rng.integers(1, 4))
        n_x = int(rng.integers(1, 4))
        C = rng.standard_normal((n_z, n_x))
        D = rng.standard_normal((n_z, n_z))
        D = D * (rng.uniform(0.05, 0.95) / np.linalg.norm(D, 2))
        nC = np.linalg.norm(C, 2)
        nD = np.linalg.norm(D, 2)
        for n in (1, 2, 5, 10):
            S = sum(
                np.linalg.matrix_power(D, i) @ C for i in range(n)
            )
            lhs = np.linalg.norm(S, 2)
            rhs = nC * (1.0 - nD**n) / (1.0 - nD)
            assert lhs <= rhs * (1.0 + 1e-12)
            assert np.linalg.norm(np.linalg.matrix_power(D, n), 2) <= nD**n * (1.0 + 1e-12)


def test_fixed_point_map_gain_bound():
    # Lipschitz bound of x -> (I-D)^{-1} C x
    rng = np.random.default_rng(37)
    for _ in range(200):
        n_z = int(rng.integers(1, 5))
        C = rng.standard_normal((n_z, 3))
        D = rng.standard_normal((n_z, n_z))
        D = D * (rng.uniform(0.05, 0.95) / np.linalg.norm(D, 2))
        K = np.linalg.solve(np.eye(n_z) - D, C)
        assert np.linalg.norm(K, 2) <= np.linalg.norm(C, 2) / (
            1.0 - np.linalg.norm(D, 2)
        ) * (1.0 + 1e-12)


# ---------------------------------------------------------------- wiring


def test_make_lti_ctdt_wires_maps_and_plan():
    lti = LtiSystem(
        A=np.array([[0.0, 1.0], [-1.0, -1.0]]),
        B=np.array([[0.0], [1.0]]),
        C=np.array([[1.0, 0.0]]),
        D=np.array([[0.5]]),
    )
    sys = make_lti_ctdt(lti, n=2, T=0.25)
    assert sys.dims == (2, 1)
    assert sys.n == 2 and sys.T == 0.25
    assert sys.kernel is not None
    x = np.array([1.0, 2.0])
    z = np.array([3.0])
    np.testing.assert_allclose(sys.f(x, z), lti.A @ x + lti.B @ z)
    np.testing.assert_allclose(sys.G(x, z), lti.C @ x + lti.D @ z)
    np.testing.assert_allclose(sys.f(np.zeros(2), np.zeros(1)), 0.0)
