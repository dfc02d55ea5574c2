"""Ground-truth parameters, designs, noise and dataset synthesis.

Randomness
----------
Every generator takes an unsigned 64-bit master ``seed``.  Independent
streams are derived with :class:`numpy.random.SeedSequence` using a
``spawn_key`` (``child_rng(seed, *key)``), and each stream drives a PCG64
bit generator.  Gaussian draws use numpy's ``standard_normal`` (ziggurat
method).  The noise for observation ``t`` comes from its own child stream
``(seed, NOISE, t)``, so a dataset is a pure function of ``(config, seed)``
and single observations can be regenerated independently.
"""

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError
from .linalg import as_matrix

# spawn-key namespaces
_A_STAR, _B_STAR, _DESIGN, _NOISE = 0, 1, 2, 3


def child_rng(seed, *key):
    """PCG64 generator for the child stream ``key`` of the master ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def child_seed(seed, *key):
    """Deterministic 64-bit seed for the child stream ``key`` of ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class DesignKind(str, enum.Enum):
    CANONICAL = "canonical"
    UNIFORM = "uniform"
    ORTHOGONAL = "orthogonal"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ConfigError(f"unknown design kind {value!r}; expected one of {names}")


@dataclass(frozen=True)
class ModelParameters:
    """Ground truth of ``Y_t = A* X_t B* + E_t``.

    ``A_star`` is n x m, nonnegative with rows summing to one; ``B_star`` is
    q x p.  The noise has i.i.d. entries with standard deviation
    ``sigma_r * sigma_c``; setting either scale to zero gives a noiseless model.
    """

    A_star: np.ndarray
    B_star: np.ndarray
    sigma_r: float = 1.0
    sigma_c: float = 1.0

    def __post_init__(self):
        A = as_matrix(self.A_star, "A_star")
        B = as_matrix(self.B_star, "B_star")
        if np.any(A < 0):
            raise ConfigError("A_star must be entrywise nonnegative")
        rowsum = A.sum(axis=1)
        if np.max(np.abs(rowsum - 1.0)) > 1e-12:
            raise ConfigError("rows of A_star must sum to 1 (unit L1 norm)")
        if self.sigma_r < 0 or self.sigma_c < 0:
            raise ConfigError("noise scales must be nonnegative")
        object.__setattr__(self, "A_star", A)
        object.__setattr__(self, "B_star", B)

    @property
    def sigma(self):
        return float(self.sigma_r * self.sigma_c)

    @property
    def dims(self):
        """``(n, m, p, q)``."""
        n, m = self.A_star.shape
        q, p = self.B_star.shape
        return n, m, p, q

    @property
    def beta_star(self):
        """Mean entry of ``B_star``."""
        return float(self.B_star.mean())


@dataclass(frozen=True)
class Dataset:
    """Aligned observations; ``predictors`` is (T, m, q), ``responses`` (T, n, p)."""

    predictors: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.predictors, dtype=float)
        Y = np.asarray(self.responses, dtype=float)
        if X.ndim != 3 or Y.ndim != 3:
            raise DimensionError("predictors and responses must be stacks of matrices")
        if X.shape[0] != Y.shape[0] or X.shape[0] < 1:
            raise DimensionError(
                f"need equal, positive T; got {X.shape[0]} predictors, {Y.shape[0]} responses"
            )
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise DimensionError("dataset contains NaN or Inf entries")
        object.__setattr__(self, "predictors", X)
        object.__setattr__(self, "responses", Y)

    @property
    def T(self):
        return self.predictors.shape[0]

    @property
    def dims(self):
        """``(n, m, p, q, T)``."""
        T, m, q = self.predictors.shape
        _, n, p = self.responses.shape
        return n, m, p, q, T

    def stacked_design(self):
        """T x mq matrix whose row t is ``vec(X_t)``."""
        T, m, q = self.predictors.shape
        return self.predictors.transpose(0, 2, 1).reshape(T, m * q)

    def stacked_responses(self):
        """T x np matrix whose row t is ``vec(Y_t)``."""
        T, n, p = self.responses.shape
        return self.responses.transpose(0, 2, 1).reshape(T, n * p)


def _uniform_rows(rng, n, m):
    A = rng.random((n, m))
    for i in range(n):
        while A[i].sum() < 1e-300:
            A[i] = rng.random(m)
    return A / A.sum(axis=1, keepdims=True)


def generate_A_star(n, m, seed):
    """Uniform [0, 1) entries with every row divided by its sum."""
    if n < 1 or m < 1:
        raise ConfigError("n and m must be positive")
    return _uniform_rows(child_rng(seed, _A_STAR), n, m)


def generate_B_star(q, p, seed):
    if q < 1 or p < 1:
        raise ConfigError("q and p must be positive")
    return child_rng(seed, _B_STAR).random((q, p))


def sample_matrix_normal(n, p, sigma_r, sigma_c, seed):
    """n x p draw from MN(0, sigma_r^2 I_n, sigma_c^2 I_p).

    ``seed`` may also be a ``numpy.random.Generator``.
    """
    if n < 1 or p < 1:
        raise ConfigError("matrix dimensions must be positive")
    if sigma_r <= 0 or sigma_c <= 0:
        raise ConfigError("sigma_r and sigma_c must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else child_rng(seed)
    return (sigma_r * sigma_c) * rng.standard_normal((n, p))


def generate_design(kind, m, q, T, seed):
    """Return a (T, m, q) stack of predictor matrices.

    ``canonical``: the basis matrices E_(k,l), with t = k + l*m (0-based).
    ``uniform``: i.i.d. uniform [0, 1) entries.
    ``orthogonal``: stacked design with X^T X / T = I exactly (up to rounding).
    """
    kind = DesignKind.parse(kind)
    d = m * q
    if kind is DesignKind.CANONICAL:
        if T != d:
            raise ConfigError(f"canonical design needs T = mq = {d}, got T={T}")
        X = np.zeros((d, m, q))
        for t in range(d):
            X[t, t % m, t // m] = 1.0
        return X
    rng = child_rng(seed, _DESIGN)
    if kind is DesignKind.UNIFORM:
        if T < 1:
            raise ConfigError("T must be positive")
        return rng.random((T, m, q))
    if T < d:
        raise ConfigError(f"orthogonal design needs T >= mq = {d}, got T={T}")
    Q, R = np.linalg.qr(rng.standard_normal((T, d)))
    # fix column signs so the draw is a deterministic function of the seed
    Q = Q * np.sign(np.diag(R))
    flat = np.sqrt(T) * Q
    return flat.reshape(T, q, m).transpose(0, 2, 1).copy()


def forward_map(params, X):
    """Noiseless response ``A* X B*``."""
    X = as_matrix(X, "X")
    n, m, p, q = params.dims
    if X.shape != (m, q):
        raise DimensionError(f"predictor must be {m}x{q}, got {X.shape[0]}x{X.shape[1]}")
    return params.A_star @ X @ params.B_star


def generate_dataset(params, kind, T, seed):
    """Draw a design and responses ``A* X_t B* + E_t`` with per-t noise streams."""
    n, m, p, q = params.dims
    X = generate_design(kind, m, q, T, seed)
    M = np.einsum("ik,tkl,lj->tij", params.A_star, X, params.B_star, optimize=True)
    if params.sigma > 0:
        for t in range(T):
            M[t] += sample_matrix_normal(
                n, p, params.sigma_r, params.sigma_c, child_rng(seed, _NOISE, t)
            )
    return Dataset(X, M)


def save_dataset(dataset, directory, meta=None):
    """Write ``meta.json`` plus little-endian float64 ``X.bin`` / ``Y.bin``.

    Arrays are stored t-major with each matrix column-stacked, i.e. the
    stacked design and response matrices in row-major order.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n, m, p, q, T = dataset.dims
    info = {"n": n, "m": m, "p": p, "q": q, "T": T,
            "sigma_r": None, "sigma_c": None, "design": None, "seed": None}
    info.update(meta or {})
    (directory / "meta.json").write_text(json.dumps(info, indent=2, sort_keys=True))
    dataset.stacked_design().astype("<f8").tofile(directory / "X.bin")
    dataset.stacked_responses().astype("<f8").tofile(directory / "Y.bin")
    return directory


def load_dataset(directory):
    """Inverse of :func:`save_dataset`; returns ``(dataset, meta)``."""
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text())
    n, m, p, q, T = (int(meta[k]) for k in ("n", "m", "p", "q", "T"))
    Xf = np.fromfile(directory / "X.bin", dtype="<f8")
    Yf = np.fromfile(directory / "Y.bin", dtype="<f8")
    if Xf.size != T * m * q or Yf.size != T * n * p:
        raise DimensionError(f"binary sizes in {directory} do not match meta.json")
    X = Xf.reshape(T, q, m).transpose(0, 2, 1)
    Y = Yf.reshape(T, p, n).transpose(0, 2, 1)
    return Dataset(X, Y), meta
