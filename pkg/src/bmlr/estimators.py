"""Closed-form estimators built on the least-squares coefficient matrix.

Every estimator is a deterministic function of ``C_hat`` (mq x np), so it is
computed once per dataset (:func:`compute_C_hat`) and shared.  Internally the
matrix is viewed as a 4-D array ``C4[k, l, i, j]`` with row ``k + l*m`` and
column ``i + j*n``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, NoRootError, RecoveryError
from .linalg import FlatIndexMap, as_matrix, least_squares_solve

DENOM_TOL = 1e-12
CONSISTENCY_TOL = 1e-9


@dataclass(frozen=True)
class CHat:
    matrix: np.ndarray
    index: FlatIndexMap

    def __post_init__(self):
        M = as_matrix(self.matrix, "C_hat")
        if M.shape != self.index.shape:
            raise DimensionError(
                f"C_hat shape {M.shape} does not match index map {self.index.shape}"
            )
        object.__setattr__(self, "matrix", M)

    @classmethod
    def from_matrix(cls, matrix, n, m, p, q):
        return cls(np.asarray(matrix, dtype=float), FlatIndexMap(m=m, q=q, n=n, p=p))

    @property
    def dims(self):
        """``(n, m, p, q)``."""
        ix = self.index
        return ix.n, ix.m, ix.p, ix.q

    def as_tensor(self):
        """View as ``C4[k, l, i, j]``."""
        n, m, p, q = self.dims
        return self.matrix.reshape(q, m, p, n).transpose(1, 0, 3, 2)

    def entry(self, k, l, i, j):
        return self.matrix[self.index.row_index(k, l), self.index.col_index(i, j)]


@dataclass
class EstimatorOutput:
    B_hat: np.ndarray
    A_tilde: np.ndarray
    A_hat: np.ndarray
    gamma_hat: np.ndarray
    beta_hat_loo: np.ndarray
    clip_count: int
    denom_warnings: list = field(default_factory=list)
    B_sparse: np.ndarray = None
    A_sparse: np.ndarray = None
    thresholds: "ThresholdSpec" = None


@dataclass(frozen=True)
class ThresholdSpec:
    delta: float
    tau_B: float
    tau_A: float
    t_delta: float

    @classmethod
    def compute(cls, sigma, n, m, p, q, T, delta):
        return cls(
            delta=delta,
            tau_B=threshold_tau_B(sigma, m, n, T, p, q, delta),
            tau_A=threshold_tau_A(sigma, T, p, q, n, m, delta),
            t_delta=solve_t_delta(sigma, m, n, p, q, T, delta) if sigma > 0 else 0.0,
        )


def compute_C_hat(dataset):
    """Least-squares coefficients ``(X^T X)^{-1} X^T Y`` of the stacked data."""
    n, m, p, q, T = dataset.dims
    C = least_squares_solve(dataset.stacked_design(), dataset.stacked_responses())
    return CHat.from_matrix(C, n, m, p, q)


def recover_noiseless_canonical(M_matrices, m):
    """Exact ``(A, B)`` from responses to the canonical basis design.

    ``M_matrices`` is a (mq, n, p) stack ordered so that observation
    ``k + l*m`` answers the basis matrix E_(k,l).  B is read from the sums over
    k; each A entry is the ratio against the largest-magnitude B entry.
    """
    M = np.asarray(M_matrices, dtype=float)
    if M.ndim != 3 or M.shape[0] % m:
        raise DimensionError(f"expected a stack of m*q matrices with m={m}")
    q = M.shape[0] // m
    _, n, p = M.shape
    M4 = M.reshape(q, m, n, p)  # [l, k, i, j]
    sums = M4.sum(axis=1)  # [l, i, j]
    B = sums[:, 0, :]
    spread = float(np.max(np.abs(sums - B[:, None, :])))
    if spread > CONSISTENCY_TOL * max(1.0, float(np.max(np.abs(sums)))):
        raise RecoveryError(
            f"column sums depend on the response row (max spread {spread:.3e}); "
            "input is not a noiseless model response"
        )
    absB = np.abs(B)
    if absB.max() == 0.0:
        raise RecoveryError("every entry of B is zero; A is not recoverable")
    l0, j0 = np.unravel_index(np.argmax(absB), B.shape)
    A = M4[l0, :, :, j0].T / B[l0, j0]
    return A, B


def _support_mask(B, zero_tol):
    scale = float(np.max(np.abs(B))) if B.size else 0.0
    return np.abs(B) > zero_tol * max(scale, 1e-300)


def recover_noiseless_general(C, zero_tol=1e-12):
    """Exact ``(A, B)`` from the noiseless coefficient matrix.

    B is the row average of the k-sums; A averages numerators and
    denominators over the nonzero entries of B.  Entries of B below
    ``zero_tol`` times its largest magnitude count as zero.
    """
    C4 = C.as_tensor()
    B = estimate_B_hat(C)
    mask = _support_mask(B, zero_tol)
    if not mask.any():
        raise RecoveryError("B has no nonzero entry; A is not recoverable")
    denom = B[mask].sum()
    if abs(denom) <= DENOM_TOL:
        raise RecoveryError("sum of nonzero B entries vanishes; A is not recoverable")
    num = np.einsum("klij,lj->ik", C4, mask.astype(float))
    return num / denom, B


def estimate_B_hat(C):
    n = C.index.n
    return C.as_tensor().sum(axis=(0, 2)) / n


def estimate_A_tilde(C):
    """Plug-in ratio estimator with a leave-one-row-out denominator.

    Returns ``(A_tilde, beta_hat_loo, denom_warnings)``.  ``beta_hat_loo[i]``
    is the summed leave-row-i-out B estimate; where its magnitude is below
    1e-12 the A entries of row i are NaN and listed in ``denom_warnings``.
    """
    n, m, p, q = C.dims
    if n < 2:
        raise ConfigError("the leave-one-out estimator needs n >= 2")
    C4 = C.as_tensor()
    num = C4.sum(axis=(1, 3)).T  # [i, k]
    row_tot = num.sum(axis=1)
    beta_loo = (row_tot.sum() - row_tot) / (n - 1)
    A = np.empty((n, m))
    warnings = []
    for i in range(n):
        if abs(beta_loo[i]) < DENOM_TOL:
            A[i] = np.nan
            warnings.extend((i, k) for k in range(m))
        else:
            A[i] = num[i] / beta_loo[i]
    return A, beta_loo, warnings


def estimate_A_hat(A_tilde):
    """Clip to [0, 1]; NaN entries become 0.  Returns ``(A_hat, clip_count)``."""
    A = np.asarray(A_tilde, dtype=float)
    out = np.clip(np.nan_to_num(A, nan=0.0), 0.0, 1.0)
    changed = np.isnan(A) | (out != A)
    return out, int(changed.sum())


def compute_gamma_hat(C):
    n, m, p, q = C.dims
    return C.as_tensor().sum(axis=(1, 3)).T / (p * q)


def _check_threshold_args(sigma, delta, *dims):
    if sigma < 0:
        raise ConfigError("sigma must be nonnegative")
    if not 0 < delta < 1:
        raise ConfigError(f"delta must lie in (0, 1), got {delta}")
    if any(d <= 0 for d in dims):
        raise ConfigError("dimensions and T must be positive")


def threshold_tau_B(sigma, m, n, T, p, q, delta):
    _check_threshold_args(sigma, delta, m, n, T, p, q)
    return sigma * math.sqrt(2 * m / (n * T)) * (
        math.sqrt(math.log(2 * p * q)) + math.sqrt(math.log(2 / delta))
    )


def threshold_tau_A(sigma, T, p, q, n, m, delta):
    _check_threshold_args(sigma, delta, m, n, T, p, q)
    return sigma * math.sqrt(2 / (T * p * q)) * (
        math.sqrt(math.log(2 * n * m)) + math.sqrt(math.log(2 / delta))
    )


def hard_threshold_B(B_hat, tau):
    """Keep entries with ``|B| > 2 tau``, zero the rest."""
    if tau < 0:
        raise ConfigError("tau must be nonnegative")
    B = np.asarray(B_hat, dtype=float)
    return np.where(np.abs(B) > 2 * tau, B, 0.0)


def hard_threshold_A(A_hat, gamma_hat, tau):
    """Keep ``A_hat`` entries whose gate ``|gamma_hat|`` exceeds ``2 tau``."""
    if tau < 0:
        raise ConfigError("tau must be nonnegative")
    A = np.asarray(A_hat, dtype=float)
    G = np.asarray(gamma_hat, dtype=float)
    if A.shape != G.shape:
        raise DimensionError(f"A_hat {A.shape} and gamma_hat {G.shape} differ in shape")
    return np.where(np.abs(G) > 2 * tau, A, 0.0)


def _log_t_delta_terms(t, sigma, m, n, p, q, T):
    s2 = sigma * sigma
    tpq = T * p * q
    log1 = (math.log(sigma * math.sqrt(2 * m)) - math.log(t)
            - 0.5 * math.log(n * tpq * math.pi) - tpq * t * t / (2 * m * s2))
    log2 = (math.log(sigma * math.sqrt(2)) - math.log(t)
            - 0.5 * math.log(tpq * math.pi) - tpq * t * t / (2 * s2))
    return log1, log2


def t_delta_function(t, sigma, m, n, p, q, T):
    """Two-term Gaussian tail sum whose level-delta root is ``t_delta``."""
    log1, log2 = _log_t_delta_terms(t, sigma, m, n, p, q, T)
    return math.exp(log1) + math.exp(log2)


def solve_t_delta(sigma, m, n, p, q, T, delta, tol=1e-10):
    """Unique positive root of ``t_delta_function(t) = delta``.

    The function is strictly decreasing, so bisection on a bracket is used,
    comparing in log space to survive underflow of either term.
    """
    _check_threshold_args(sigma, delta, m, n, T, p, q)
    if sigma <= 0:
        raise ConfigError("t_delta needs sigma > 0")
    log_delta = math.log(delta)

    def excess(t):
        return np.logaddexp(*_log_t_delta_terms(t, sigma, m, n, p, q, T)) - log_delta

    lo = 1e-12 * sigma
    hi = 10 * sigma * math.sqrt(m) * max(1.0, math.sqrt(math.log(1 / delta)))
    if excess(lo) <= 0:
        raise NoRootError(
            f"f(t) <= delta already at t={lo:.3e}; parameters underflow the bracket"
        )
    while excess(hi) > 0:
        hi *= 2
        if hi > 1e12 * sigma:
            raise NoRootError("could not bracket t_delta from above")
    # bisect down to adjacent floats; the 1e-12 width target is always met
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
    t = 0.5 * (lo + hi)
    resid = abs(t_delta_function(t, sigma, m, n, p, q, T) - delta)
    if resid > tol:
        raise NoRootError(f"bisection stalled with residual {resid:.3e}")
    return t


def support_of(M, zero_tol=0.0):
    M = np.asarray(M, dtype=float)
    return {(int(r), int(c)) for r, c in zip(*np.nonzero(np.abs(M) > zero_tol))}


def fit(dataset, delta=None, sigma=None):
    """Run every estimator on ``dataset``.

    With ``delta`` and ``sigma`` given, the hard-thresholded variants and the
    thresholds are filled in as well.
    """
    C = compute_C_hat(dataset)
    return fit_from_C(C, delta=delta, sigma=sigma, T=dataset.T)


def fit_from_C(C, delta=None, sigma=None, T=None):
    B_hat = estimate_B_hat(C)
    A_tilde, beta_loo, warnings = estimate_A_tilde(C)
    A_hat, clips = estimate_A_hat(A_tilde)
    gamma = compute_gamma_hat(C)
    out = EstimatorOutput(
        B_hat=B_hat, A_tilde=A_tilde, A_hat=A_hat, gamma_hat=gamma,
        beta_hat_loo=beta_loo, clip_count=clips, denom_warnings=warnings,
    )
    if delta is not None:
        if sigma is None or T is None:
            raise ConfigError("sparse estimators need sigma and T alongside delta")
        n, m, p, q = C.dims
        th = ThresholdSpec.compute(sigma, n, m, p, q, T, delta)
        out.thresholds = th
        out.B_sparse = hard_threshold_B(B_hat, th.tau_B)
        out.A_sparse = hard_threshold_A(A_hat, gamma, th.tau_A)
    return out
