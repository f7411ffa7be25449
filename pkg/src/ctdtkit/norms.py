"""Norm machinery for sampled-data stability certificates.

Weighted vector norms, induced and logarithmic matrix norms, spectral
quantities, a Perron-based weight construction, and the exponential
kernel ``h(t, c)`` that sampling-period bounds are built from.

All functions are pure and operate on plain numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "WeightedNorm",
    "h_kernel",
    "log_norm_2_weighted",
    "spectral_radius",
    "spectral_abscissa",
    "schur_2x2_nonneg",
    "induced_norm_2_weighted",
    "perron_weights",
]

# |c| below this cutoff takes the c == 0 branch of h_kernel (the ratio
# form loses precision long before the limit stops being the right answer)
H_KERNEL_ZERO_CUTOFF = 1e-12

_POWER_TOL = 1e-12
_POWER_MAX_ITER = 10_000
_PERRON_SLACK = 1e-8
_RATIO_SEARCH_BOUNDS = (1e-6, 1e6)


@dataclass(frozen=True)
class WeightedNorm:
    """Weighted l_p vector norm with exponent p in {1, 2, inf}.

    For finite p the norm is ``(sum_i eta_i |v_i|^p)^(1/p)``; for
    p = inf it is ``max_i eta_i |v_i|`` (weights folded into the max,
    the convention that keeps the norm monotone in the weights).
    """

    p: float
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.p not in (1, 2, math.inf):
            raise ValueError(f"p must be 1, 2 or inf, got {self.p}")
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty 1-D vector")
        if not np.all(np.isfinite(w)) or np.any(w <= 0.0):
            raise ValueError("weights must be strictly positive and finite")
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.weights.size

    def __call__(self, v: np.ndarray) -> float:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise ValueError(f"expected vector of dimension {self.dim}, got shape {v.shape}")
        a = np.abs(v)
        if self.p == 1:
            return float(np.sum(self.weights * a))
        if self.p == 2:
            return float(math.sqrt(np.sum(self.weights * a * a)))
        return float(np.max(self.weights * a))


def h_kernel(t: float, c: float) -> float:
    """Integral of e^{c*(t-s)} for s from 0 to t.

    Closed form: (e^{c t} - 1)/c for c != 0 and t for c = 0. The result
    is nonnegative, zero only at t = 0, and strictly increasing in both
    t (for any c) and c (for t > 0).

    Parameters
    ----------
    t : float
        Nonnegative duration.
    c : float
        Growth rate, any sign. |c| < 1e-12 is treated as zero.
    """
    if t < 0.0:
        raise ValueError(f"t must be nonnegative, got {t}")
    if abs(c) < H_KERNEL_ZERO_CUTOFF:
        return float(t)
    # expm1 keeps full precision for small c*t
    return float(math.expm1(c * t) / c)


def _check_spd(P: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError("weight matrix must be square")
    if not np.all(np.isfinite(P)):
        raise ValueError("weight matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(P))))
    if np.max(np.abs(P - P.T)) > tol * scale:
        raise ValueError("weight matrix is not symmetric within 1e-10")
    if np.min(np.linalg.eigvalsh(0.5 * (P + P.T))) <= 0.0:
        raise ValueError("weight matrix is not positive definite")
    return P


def log_norm_2_weighted(A: np.ndarray, P: np.ndarray | None = None) -> float:
    """Logarithmic norm of A in the P-weighted l2 geometry.

    Evaluates (1/2) * lambda_max(P A P^{-1} + A^T). With P = I (the
    default) this is the standard l2 log norm (1/2) * lambda_max(A + A^T).
    The similarity P^{1/2} (P A P^{-1} + A^T) P^{-1/2} is symmetric, so
    the spectrum is real and taking the max real part is exact.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    n = A.shape[0]
    if P is None:
        return 0.5 * float(np.max(np.linalg.eigvalsh(A + A.T)))
    P = _check_spd(P)
    if P.shape != A.shape:
        raise ValueError(f"shape mismatch: A is {A.shape}, P is {P.shape}")
    # X = P A P^{-1} solves X P = P A, i.e. P^T X^T = (P A)^T
    X = np.linalg.solve(P.T, (P @ A).T).T
    M = X + A.T
    ev = np.linalg.eigvals(M)
    return 0.5 * float(np.max(ev.real))


def _eig_2x2(M: np.ndarray) -> tuple[complex, complex]:
    # closed-form roots of the characteristic quadratic
    a, b = M[0, 0], M[0, 1]
    c, d = M[1, 0], M[1, 1]
    tr = a + d
    disc = (a - d) * (a - d) + 4.0 * b * c
    if disc >= 0.0:
        s = math.sqrt(disc)
        return complex((tr + s) / 2.0), complex((tr - s) / 2.0)
    s = math.sqrt(-disc)
    return complex(tr / 2.0, s / 2.0), complex(tr / 2.0, -s / 2.0)


def _eigvals(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    if M.shape[0] == 1:
        return np.array([complex(M[0, 0])])
    if M.shape[0] == 2:
        return np.array(_eig_2x2(M))
    return np.linalg.eigvals(M)


def spectral_radius(M: np.ndarray) -> float:
    """Largest eigenvalue magnitude. 2x2 inputs use the closed-form quadratic."""
    return float(np.max(np.abs(_eigvals(M))))


def spectral_abscissa(M: np.ndarray) -> float:
    """Largest eigenvalue real part. 2x2 inputs use the closed-form quadratic."""
    return float(np.max(_eigvals(M).real))


def schur_2x2_nonneg(M: np.ndarray) -> bool:
    """Exact Schur test for a nonnegative 2x2 matrix.

    For entrywise nonnegative M = [[a, b], [c, d]]:
    rho(M) < 1 iff (1 - a)(1 - d) > b*c and a + d < 2.
    """
    M = np.asarray(M, dtype=float)
    if M.shape != (2, 2):
        raise ValueError("M must be 2x2")
    if np.any(M < 0.0) or not np.all(np.isfinite(M)):
        raise ValueError("M must have finite nonnegative entries")
    a, b = M[0, 0], M[0, 1]
    c, d = M[1, 0], M[1, 1]
    return bool((1.0 - a) * (1.0 - d) > b * c and a + d < 2.0)


def induced_norm_2_weighted(M: np.ndarray, eta: np.ndarray) -> float:
    """Operator norm of M under the eta-weighted l2 vector norm.

    Equals the largest singular value of D^{1/2} M D^{-1/2} with
    D = diag(eta).
    """
    M = np.asarray(M, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("M must be square")
    if eta.shape != (M.shape[0],):
        raise ValueError(f"weight vector shape {eta.shape} does not match matrix {M.shape}")
    if np.any(eta <= 0.0) or not np.all(np.isfinite(eta)):
        raise ValueError("weights must be strictly positive and finite")
    s = np.sqrt(eta)
    return float(np.linalg.norm((s[:, None] * M) / s[None, :], 2))


def _power_iteration(M: np.ndarray) -> np.ndarray:
    # principal eigenvector of an entrywise-positive matrix; the iterate
    # stays positive, so normalizing by the l1 norm is safe
    n = M.shape[0]
    v = np.full(n, 1.0 / n)
    for _ in range(_POWER_MAX_ITER):
        w = M @ v
        w /= np.sum(w)
        if np.max(np.abs(w - v)) < _POWER_TOL:
            return w
        v = w
    return v


def _ratio_search_2x2(M: np.ndarray) -> np.ndarray:
    # golden-section search over eta2/eta1 on a log scale, minimizing the
    # induced weighted norm; the objective is unimodal in log(ratio)
    lo, hi = (math.log(b) for b in _RATIO_SEARCH_BOUNDS)
    invphi = (math.sqrt(5.0) - 1.0) / 2.0

    def f(t: float) -> float:
        return induced_norm_2_weighted(M, np.array([1.0, math.exp(t)]))

    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(200):
        if b - a < 1e-12:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    t = 0.5 * (a + b)
    return np.array([1.0, math.exp(t)])


def perron_weights(M: np.ndarray) -> np.ndarray:
    """Weights that make the induced 2-norm of a positive matrix equal its spectral radius.

    For an entrywise-positive M with right Perron vector v and left
    Perron vector u, the weights eta_i = u_i / v_i satisfy
    ``induced_norm_2_weighted(M, eta) == rho(M)`` in exact arithmetic.
    The construction is verified numerically against
    rho(M) * (1 + 1e-8); if verification fails, a golden-section search
    over the weight ratio (2x2 only) is used as a fallback.

    Returns eta normalized so that eta[0] == 1.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("M must be square")
    if np.any(M <= 0.0) or not np.all(np.isfinite(M)):
        raise ValueError("M must have finite, strictly positive entries")
    rho = spectral_radius(M)
    v = _power_iteration(M)
    u = _power_iteration(M.T)
    eta = u / v
    eta = eta / eta[0]
    if induced_norm_2_weighted(M, eta) <= rho * (1.0 + _PERRON_SLACK):
        return eta
    if M.shape[0] != 2:
        raise RuntimeError("Perron weight verification failed and no fallback exists for n > 2")
    eta = _ratio_search_2x2(M)
    if induced_norm_2_weighted(M, eta) <= rho * (1.0 + _PERRON_SLACK):
        return eta / eta[0]
    raise RuntimeError("weight search did not reach rho(M) within the 1e-8 verification slack")
