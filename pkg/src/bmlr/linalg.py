"""Dense real-matrix primitives.

Everything here works on plain 2-D ``numpy`` float arrays.  ``vectorize`` is
always column stacking, independent of the array's memory order.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionError, SingularDesignError

RANK_TOL = 1e-10
POWER_TOL = 1e-12
POWER_MAXITER = 10_000


def as_matrix(M, name="matrix"):
    """Validate ``M`` as a finite, non-empty 2-D float array and return it."""
    A = np.asarray(M, dtype=float)
    if A.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {A.shape}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise DimensionError(f"{name} must have at least one row and column")
    if not np.all(np.isfinite(A)):
        raise DimensionError(f"{name} contains NaN or Inf entries")
    return A


@dataclass(frozen=True)
class FlatIndexMap:
    """Flattened (k, l) / (i, j) index convention of the coefficient matrix.

    All indices are 0-based.  Row ``k + l*m`` of the coefficient matrix
    belongs to predictor entry (k, l); column ``i + j*n`` belongs to response
    entry (i, j).  In 1-based notation these read ``k + (l-1)m`` and
    ``i + (j-1)n``.
    """

    m: int
    q: int
    n: int
    p: int

    def row_index(self, k, l):
        if not (0 <= k < self.m and 0 <= l < self.q):
            raise IndexError(f"(k, l)=({k}, {l}) outside [{self.m}]x[{self.q}]")
        return k + l * self.m

    def col_index(self, i, j):
        if not (0 <= i < self.n and 0 <= j < self.p):
            raise IndexError(f"(i, j)=({i}, {j}) outside [{self.n}]x[{self.p}]")
        return i + j * self.n

    def row_pair(self, r):
        return r % self.m, r // self.m

    def col_pair(self, c):
        return c % self.n, c // self.n

    @property
    def shape(self):
        return self.m * self.q, self.n * self.p


def vectorize(M):
    """Column-stack ``M`` into a 1-D array."""
    A = as_matrix(M)
    return A.reshape(-1, order="F").copy()


def unvectorize(v, rows, cols):
    v = np.asarray(v, dtype=float).ravel()
    if v.size != rows * cols:
        raise DimensionError(
            f"cannot reshape vector of length {v.size} into {rows}x{cols}"
        )
    return v.reshape((rows, cols), order="F").copy()


def kronecker(A, B):
    """Kronecker product; block (i, j) of the result is ``A[i, j] * B``."""
    return np.kron(as_matrix(A, "A"), as_matrix(B, "B"))


def least_squares_solve(X, Y, rank_tol=RANK_TOL):
    """Return ``argmin_C ||X C - Y||_F`` through a Householder QR of ``X``.

    ``X`` is T x d with T >= d, ``Y`` is T x e.  Raises
    :class:`SingularDesignError` when the smallest absolute diagonal entry of
    R falls below ``rank_tol`` times the largest one.
    """
    X = as_matrix(X, "X")
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    Y = as_matrix(Y, "Y")
    T, d = X.shape
    if Y.shape[0] != T:
        raise DimensionError(f"X has {T} rows but Y has {Y.shape[0]}")
    if T < d:
        raise SingularDesignError(
            f"design has {T} rows for {d} unknowns; need T >= d", condition=0.0
        )
    Q, R = np.linalg.qr(X, mode="reduced")
    diag = np.abs(np.diag(R))
    ratio = diag.min() / diag.max() if diag.max() > 0 else 0.0
    if ratio <= rank_tol:
        raise SingularDesignError(
            f"design is numerically rank deficient (min/max |R_ii| = {ratio:.3e})",
            condition=ratio,
        )
    return solve_triangular(R, Q.T @ Y, lower=False)


def frobenius_norm(M):
    A = as_matrix(M)
    return float(np.sqrt(np.sum(A * A)))


def max_norm(M):
    return float(np.max(np.abs(as_matrix(M))))


def operator_norm(M, tol=POWER_TOL, maxiter=POWER_MAXITER):
    """Largest singular value by power iteration on the Gram matrix.

    Starts from the normalised all-ones vector.  If that start lies in the
    null space of the Gram matrix, the Gram column of largest norm is used
    instead, so the result stays deterministic.
    """
    A = as_matrix(M)
    scale = float(np.max(np.abs(A)))
    if scale == 0.0:
        return 0.0
    # rescale so the Gram matrix neither underflows nor overflows
    A = A / scale
    G = A.T @ A if A.shape[1] <= A.shape[0] else A @ A.T
    gscale = np.max(np.abs(G))
    v = np.ones(G.shape[0]) / np.sqrt(G.shape[0])
    w = G @ v
    if np.linalg.norm(w) <= 1e-14 * gscale:
        v = G[:, np.argmax(np.linalg.norm(G, axis=0))].copy()
        v /= np.linalg.norm(v)
        w = G @ v
    lam = float(v @ w)
    for _ in range(maxiter):
        v = w / np.linalg.norm(w)
        w = G @ v
        lam_new = float(v @ w)
        if abs(lam_new - lam) <= tol * max(lam_new, 1e-300):
            lam = lam_new
            break
        lam = lam_new
    return scale * float(np.sqrt(max(lam, 0.0)))


@dataclass(frozen=True)
class OrtReport:
    ok: bool
    deviation: float
    tol: float

    def __bool__(self):
        return self.ok


def check_ort(X, tol):
    """Check ``max|X^T X / T - I| <= tol`` for a T x d stacked design."""
    X = as_matrix(X, "X")
    T, d = X.shape
    if T < d:
        raise DimensionError(f"need T >= d, got T={T}, d={d}")
    dev = float(np.max(np.abs(X.T @ X / T - np.eye(d))))
    return OrtReport(ok=dev <= tol, deviation=dev, tol=tol)
