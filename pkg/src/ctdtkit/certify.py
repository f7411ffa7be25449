"""Stability certificates for sampled CT-DT interconnections.

Everything here is closed-form arithmetic on a small bundle of constants:
the per-interval bound matrix B(T), the sampled-gain matrix A(n, T), its
reduced-model refinement Abar(n, T), the small-gain test, the sufficient
sampling-period bound T(n), transient prefactors and decay rates, and the
LTI block specialization L(n, T).

Constants are always caller-supplied (computed analytically for LTI
systems via :func:`lti_constants`, or estimated empirically elsewhere);
nothing in this module guesses a Lipschitz constant.

Sign convention: decay rates are stored positive, meaning the envelope
decays like ``e^{-rate * t}``. A negative stored rate therefore denotes
growth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .norms import (
    h_kernel,
    induced_norm_2_weighted,
    log_norm_2_weighted,
    perron_weights,
    schur_2x2_nonneg,
    spectral_radius,
)
from .systems import LtiSystem, lti_reduced_matrix, zoh_discretize

__all__ = [
    "GainConstants",
    "Certificate",
    "bound_matrix_B",
    "small_gain_holds",
    "gain_matrix_smallgain",
    "gain_matrix_rm",
    "sampling_bound_Tn",
    "rm_sufficient_margin",
    "transient_constants_smallgain",
    "transient_constants_rm",
    "lti_constants",
    "lti_dtc_matrix",
    "certificate_smallgain",
    "certificate_rm",
    "certificate_lti_dtc",
    "scalar_sample_multiplier",
    "scalar_instability_threshold",
]


@dataclass(frozen=True)
class GainConstants:
    """Lipschitz/contraction constants describing one interconnection.

    ``oslip_x_f`` is a user-supplied upper bound on the one-sided
    Lipschitz constant of f in x (any sign); it cannot be validated
    internally and is an explicit trust boundary. ``rm_rate`` is the
    contraction rate of the reduced model when known (must be positive),
    otherwise None.
    """

    lip_x_f: float
    lip_z_f: float
    oslip_x_f: float
    lip_x_G: float
    lip_z_G: float
    rm_rate: float | None = None

    def __post_init__(self):
        for name in ("lip_x_f", "lip_z_f", "lip_x_G", "lip_z_G"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")
        if not math.isfinite(self.oslip_x_f):
            raise ValueError("oslip_x_f must be finite")
        if self.rm_rate is not None and not (math.isfinite(self.rm_rate) and self.rm_rate > 0.0):
            raise ValueError(f"rm_rate must be positive when given, got {self.rm_rate}")


@dataclass(frozen=True)
class Certificate:
    """Outcome of one certificate construction.

    ``decay_rate`` follows the positive-is-stable convention:
    ``-(1/T) * ln(spectral_radius)``, positive exactly when the gain
    matrix is Schur. ``perron_weights`` and ``transient_prefactor`` are
    None for the LTI block certificate, which has no printed transient
    form.
    """

    kind: str
    gain_matrix: np.ndarray
    spectral_radius: float
    is_stable: bool
    decay_rate: float
    n: int
    T: float
    perron_weights: np.ndarray | None = None
    transient_prefactor: float | None = None


def _require_positive_T(T: float) -> None:
    if not T > 0.0:
        raise ValueError(f"T must be positive, got {T}")


def _require_n(n: int) -> None:
    if n < 1 or int(n) != n:
        raise ValueError(f"n must be a positive integer, got {n}")


def bound_matrix_B(g: GainConstants, T: float) -> np.ndarray:
    """Per-interval bound matrix relating stacked norms at kT + tau to those at kT.

    B(T) = [[max(e^{xi T}, 1), Lip_z(f) h(T, xi)], [0, 1]].
    """
    _require_positive_T(T)
    xi = g.oslip_x_f
    return np.array(
        [
            [max(math.exp(xi * T), 1.0), g.lip_z_f * h_kernel(T, xi)],
            [0.0, 1.0],
        ]
    )


def small_gain_holds(g: GainConstants) -> bool:
    """Small-gain test: -xi (1 - Lip_z(G)) > Lip_z(f) Lip_x(G).

    A true verdict forces xi < 0. Requires Lip_z(G) < 1.
    """
    if g.lip_z_G >= 1.0:
        raise ValueError(f"small-gain test requires lip_z_G < 1, got {g.lip_z_G}")
    return -g.oslip_x_f * (1.0 - g.lip_z_G) > g.lip_z_f * g.lip_x_G


def _geom_sum(L: float, n: int) -> float:
    # sum of L^i for i < n, written as the printed ratio
    if L == 1.0:
        return float(n)
    return (1.0 - L**n) / (1.0 - L)


def gain_matrix_smallgain(g: GainConstants, n: int, T: float) -> np.ndarray:
    """Sampled-gain matrix A(n, T) mapping stage norms (x(kT), z_k) forward.

    Requires xi < 0 and Lip_z(G) < 1.
    """
    _require_n(n)
    _require_positive_T(T)
    xi = g.oslip_x_f
    L = g.lip_z_G
    if xi >= 0.0:
        raise ValueError(f"gain matrix requires a negative one-sided bound, got xi={xi}")
    if L >= 1.0:
        raise ValueError(f"gain matrix requires lip_z_G < 1, got {L}")
    E = math.exp(xi * T)
    h = h_kernel(T, xi)
    gsum = _geom_sum(L, n)
    a11 = E
    a12 = g.lip_z_f * h
    a21 = gsum * g.lip_x_G * E
    a22 = gsum * g.lip_x_G * g.lip_z_f * h + L**n
    return np.array([[a11, a12], [a21, a22]])


def _c_constants(g: GainConstants, n: int) -> tuple[float, float, float, float]:
    # shared coupling constants C1, C12, C2(n), C21(n)
    L = g.lip_z_G
    q = g.lip_z_f * g.lip_x_G / (1.0 - L)
    c1 = q * (g.lip_x_f + q)
    c12 = q * g.lip_z_f
    c2n = q * L**n
    c21n = (L**n * g.lip_x_G / (1.0 - L)) * (g.lip_x_f + q)
    return c1, c12, c2n, c21n


def gain_matrix_rm(g: GainConstants, n: int, T: float) -> np.ndarray:
    """Refined gain matrix Abar(n, T) built around the reduced-model rate.

    Requires a known rm_rate (zeta > 0) and Lip_z(G) < 1. Works for any
    sign of xi.
    """
    _require_n(n)
    _require_positive_T(T)
    if g.rm_rate is None:
        raise ValueError("gain_matrix_rm requires rm_rate (zeta) to be known")
    if g.lip_z_G >= 1.0:
        raise ValueError(f"gain_matrix_rm requires lip_z_G < 1, got {g.lip_z_G}")
    zeta = g.rm_rate
    xi = g.oslip_x_f
    L = g.lip_z_G
    c1, c12, c2n, c21n = _c_constants(g, n)
    h = h_kernel(T, xi)
    ez = math.exp(-zeta * T)
    s = (1.0 - ez) / zeta
    a11 = ez + s * h * c1
    a12 = s * (g.lip_z_f + h * c12)
    a21 = h * c21n
    a22 = h * c2n + L**n
    return np.array([[a11, a12], [a21, a22]])


def sampling_bound_Tn(g: GainConstants, n: int) -> float:
    """Sufficient sampling-period bound T(n).

    Solves h(T, xi) = (1 - L^n) / (C2(n) + C1/zeta) for T. Returns +inf
    when xi < 0 and the kernel's supremum 1/(-xi) never reaches the
    threshold (every positive T then qualifies). Strictly increasing in n
    for L in (0, 1) and bounded above by zeta / C1 on the finite branch.
    """
    _require_n(n)
    if g.rm_rate is None or not g.rm_rate > 0.0:
        raise ValueError("sampling bound requires rm_rate (zeta) > 0")
    if g.lip_z_G >= 1.0:
        raise ValueError(f"sampling bound requires lip_z_G < 1, got {g.lip_z_G}")
    if not (g.lip_x_G > 0.0 and g.lip_z_f > 0.0):
        raise ValueError("sampling bound requires strictly positive lip_x_G and lip_z_f")
    xi = g.oslip_x_f
    L = g.lip_z_G
    c1, _, c2n, _ = _c_constants(g, n)
    u = (1.0 - L**n) / (c2n + c1 / g.rm_rate)
    if xi == 0.0:
        return u
    # log1p avoids absorbing sub-ulp increments of xi*u into the 1
    y = xi * u
    if xi > 0.0:
        # for positive xi the argument is >= 1 in exact arithmetic; a
        # floating-point violation indicates corrupted inputs
        assert y >= 0.0, f"log argument {1.0 + y} < 1 with xi > 0"
        return math.log1p(y) / xi
    if y <= -1.0:
        return math.inf
    return math.log1p(y) / xi


def rm_sufficient_margin(g: GainConstants, n: int, T: float) -> float:
    """Signed margin of the sufficient Schur condition for Abar(n, T).

    Negative iff T is below the sampling bound:
    margin = h(T, xi) (C2(n) + C1/zeta) + L^n - 1.
    """
    _require_n(n)
    _require_positive_T(T)
    if g.rm_rate is None:
        raise ValueError("margin requires rm_rate (zeta) to be known")
    if g.lip_z_G >= 1.0:
        raise ValueError(f"margin requires lip_z_G < 1, got {g.lip_z_G}")
    c1, _, c2n, _ = _c_constants(g, n)
    return h_kernel(T, g.oslip_x_f) * (c2n + c1 / g.rm_rate) + g.lip_z_G**n - 1.0


def transient_constants_smallgain(g: GainConstants, n: int, T: float) -> tuple[float, float]:
    """Transient prefactor and decay rate from the small-gain certificate.

    Returns (r, a) with r = ||B(T)||_{2,[eta]} / rho(A(n, T)) and
    a = -(1/T) ln rho(A(n, T)), where eta are the Perron weights of
    A(n, T). Requires the small-gain test to pass and strictly positive
    interconnection gains (otherwise the gain matrix is reducible and
    Perron weights do not exist).
    """
    if not small_gain_holds(g):
        raise ValueError("transient constants require the small-gain test to pass")
    A = gain_matrix_smallgain(g, n, T)
    rho = spectral_radius(A)
    eta = perron_weights(A)
    r = induced_norm_2_weighted(bound_matrix_B(g, T), eta) / rho
    rate = -math.log(rho) / T
    return r, rate


def transient_constants_rm(g: GainConstants, n: int, T: float) -> tuple[float, float]:
    """Transient prefactor and decay rate from the reduced-model certificate.

    Returns (prefactor, rate) where the prefactor multiplies the squared
    weighted norms of B(T) and of the fixed coupling factor
    [[1, 0], [Lip_x(G)/(1 - Lip_z(G)), 1]], all under the Perron weights
    of Abar(n, T). Requires T < sampling_bound_Tn(g, n).
    """
    tn = sampling_bound_Tn(g, n)
    if not T < tn:
        raise ValueError(f"T={T} is not below the sampling bound T(n)={tn}")
    Abar = gain_matrix_rm(g, n, T)
    rho = spectral_radius(Abar)
    eta = perron_weights(Abar)
    Bm = bound_matrix_B(g, T)
    coupling = np.array([[1.0, 0.0], [g.lip_x_G / (1.0 - g.lip_z_G), 1.0]])
    prefactor = (
        induced_norm_2_weighted(Bm, eta) ** 2
        * induced_norm_2_weighted(coupling, eta) ** 2
        / rho
    )
    rate = -math.log(rho) / T
    return prefactor, rate


def _weight_factors(
    n_x: int,
    n_z: int,
    P_x: np.ndarray | None,
    eta_z: np.ndarray | None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    # returns (Wx, Wx_inv, Wz, Wz_inv) with W the square-root weight factor
    if P_x is None:
        Wx = np.eye(n_x)
        Wx_inv = np.eye(n_x)
    else:
        P_x = np.asarray(P_x, dtype=float)
        lam, V = np.linalg.eigh(0.5 * (P_x + P_x.T))
        if np.any(lam <= 0.0):
            raise ValueError("P_x must be positive definite")
        Wx = V @ np.diag(np.sqrt(lam)) @ V.T
        Wx_inv = V @ np.diag(1.0 / np.sqrt(lam)) @ V.T
    if eta_z is None:
        Wz = np.eye(n_z)
        Wz_inv = np.eye(n_z)
    else:
        eta_z = np.asarray(eta_z, dtype=float)
        if eta_z.shape != (n_z,) or np.any(eta_z <= 0.0):
            raise ValueError("eta_z must be a strictly positive vector of length n_z")
        Wz = np.diag(np.sqrt(eta_z))
        Wz_inv = np.diag(1.0 / np.sqrt(eta_z))
    return Wx, Wx_inv, Wz, Wz_inv


def lti_constants(
    sys: LtiSystem,
    P_x: np.ndarray | None = None,
    eta_z: np.ndarray | None = None,
) -> GainConstants:
    """Analytic constant bundle for an LTI interconnection.

    Under the chosen geometries (SPD weight P_x on the x space, diagonal
    weights eta_z on the z space; identity by default):

    - oslip_x_f = log norm of A,
    - lip_x_f, lip_z_f, lip_x_G, lip_z_G = induced norms of A, B, C, D,
    - rm_rate = minus the log norm of A + B (I - D)^{-1} C when that is
      negative, else None.
    """
    Wx, Wx_inv, Wz, Wz_inv = _weight_factors(sys.n_x, sys.n_z, P_x, eta_z)
    P = None if P_x is None else np.asarray(P_x, dtype=float)
    xi = log_norm_2_weighted(sys.A, P)
    lip_x_f = float(np.linalg.norm(Wx @ sys.A @ Wx_inv, 2))
    lip_z_f = float(np.linalg.norm(Wx @ sys.B @ Wz_inv, 2))
    lip_x_G = float(np.linalg.norm(Wz @ sys.C @ Wx_inv, 2))
    lip_z_G = float(np.linalg.norm(Wz @ sys.D @ Wz_inv, 2))
    mu_rm = log_norm_2_weighted(lti_reduced_matrix(sys), P)
    rm_rate = -mu_rm if mu_rm < 0.0 else None
    return GainConstants(
        lip_x_f=lip_x_f,
        lip_z_f=lip_z_f,
        oslip_x_f=xi,
        lip_x_G=lip_x_G,
        lip_z_G=lip_z_G,
        rm_rate=rm_rate,
    )


def lti_dtc_matrix(sys: LtiSystem, n: int, T: float) -> tuple[np.ndarray, float]:
    """Exact sampled block matrix L(n, T) of an LTI interconnection.

    The stage vector (x(kT), z_k) evolves exactly as L(n, T) times the
    previous stage. Returns the matrix together with the contraction rate
    (1 + rho(L))/2 that a norm-existence argument certifies when
    rho(L) < 1.
    """
    _require_n(n)
    _require_positive_T(T)
    n_z = sys.n_z
    eye_minus_d = np.eye(n_z) - sys.D
    Ad, Gam = zoh_discretize(sys.A, sys.B, T)
    Dn = np.linalg.matrix_power(sys.D, n)
    try:
        Sn = np.linalg.solve(eye_minus_d, np.eye(n_z) - Dn)
    except np.linalg.LinAlgError as exc:
        raise ValueError("I - D is singular") from exc
    SnC = Sn @ sys.C
    L = np.block([[Ad, Gam], [SnC @ Ad, SnC @ Gam + Dn]])
    rate = (1.0 + spectral_radius(L)) / 2.0
    return L, rate


# ------------------------------------------------------------- certificates


def certificate_smallgain(g: GainConstants, n: int, T: float) -> Certificate:
    """Assemble the small-gain certificate for one (n, T)."""
    A = gain_matrix_smallgain(g, n, T)
    rho = spectral_radius(A)
    stable = schur_2x2_nonneg(A)
    eta = None
    prefactor = None
    # Perron weights need both couplings active (irreducible gain matrix)
    if stable and A[0, 1] > 0.0 and A[1, 0] > 0.0 and small_gain_holds(g):
        prefactor, _ = transient_constants_smallgain(g, n, T)
        eta = perron_weights(A)
    return Certificate(
        kind="SmallGain",
        gain_matrix=A,
        spectral_radius=rho,
        is_stable=stable,
        decay_rate=-math.log(rho) / T,
        n=n,
        T=T,
        perron_weights=eta,
        transient_prefactor=prefactor,
    )


def certificate_rm(g: GainConstants, n: int, T: float) -> Certificate:
    """Assemble the reduced-model certificate for one (n, T)."""
    Abar = gain_matrix_rm(g, n, T)
    rho = spectral_radius(Abar)
    stable = schur_2x2_nonneg(Abar)
    eta = None
    prefactor = None
    if (
        stable
        and Abar[0, 1] > 0.0
        and Abar[1, 0] > 0.0
        and T < sampling_bound_Tn(g, n)
    ):
        prefactor, _ = transient_constants_rm(g, n, T)
        eta = perron_weights(Abar)
    return Certificate(
        kind="ReducedModel",
        gain_matrix=Abar,
        spectral_radius=rho,
        is_stable=stable,
        decay_rate=-math.log(rho) / T,
        n=n,
        T=T,
        perron_weights=eta,
        transient_prefactor=prefactor,
    )


def certificate_lti_dtc(sys: LtiSystem, n: int, T: float) -> Certificate:
    """Assemble the exact LTI block certificate for one (n, T)."""
    L, _ = lti_dtc_matrix(sys, n, T)
    rho = spectral_radius(L)
    return Certificate(
        kind="LtiDtc",
        gain_matrix=L,
        spectral_radius=rho,
        is_stable=rho < 1.0,
        decay_rate=-math.log(rho) / T,
        n=n,
        T=T,
    )


# ------------------------------------------- scalar one-step sample algebra


def scalar_sample_multiplier(a: float, b: float, c: float, d: float, T: float) -> float:
    """Sample-to-sample ratio x((k+1)T) / x(kT) for the scalar interconnection.

    Valid when the DT update is applied at its fixed point
    z = c x / (1 - d): the held input over each interval is then exact and
    x((k+1)T) = (e^{aT} + (bc/(1-d)) (e^{aT} - 1)/a) x(kT).
    """
    _require_positive_T(T)
    if d >= 1.0:
        raise ValueError("requires d < 1")
    return math.exp(a * T) + (b * c / (1.0 - d)) * h_kernel(T, a)


def scalar_instability_threshold(a: float, b: float, c: float, d: float) -> float:
    """Sampling period beyond which the scalar loop's multiplier is <= -2.

    T = (1/a) log((-2a(1-d) + bc) / (a(1-d) + bc)), defined for a > 0,
    d < 1 and a stable reduced model (a(1-d) + bc < 0). Every T at or
    beyond the returned value gives |multiplier| >= 2, hence geometric
    divergence of the samples.
    """
    if not a > 0.0:
        raise ValueError("requires a > 0")
    if d >= 1.0:
        raise ValueError("requires d < 1")
    denom = a * (1.0 - d) + b * c
    if denom >= 0.0:
        raise ValueError("requires a stable reduced model: a(1-d) + bc < 0")
    num = -2.0 * a * (1.0 - d) + b * c
    return math.log(num / denom) / a
