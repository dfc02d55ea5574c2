"""Learned linear correction of two-sided image corruptions.

Image batches are float arrays of shape ``(count, 3, H, W)``.  A corruption
multiplies every channel on the left by ``inv(A*)`` and on the right by
``inv(B*)``; the correction is fitted per channel with the matrix regression
estimators (noisy channel as predictor, clean channel as response).
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import DimensionError, IllConditionedError, SingularDesignError
from .estimators import compute_C_hat, estimate_A_hat, estimate_A_tilde, estimate_B_hat
from .model import Dataset, child_rng, load_dataset, save_dataset

MAX_CONDITION = 1e8


def as_batch(images, name="batch", check_range=False):
    X = np.asarray(images, dtype=float)
    if X.ndim != 4 or X.shape[1] != 3:
        raise DimensionError(f"{name} must have shape (count, 3, H, W), got {X.shape}")
    if X.shape[0] < 1:
        raise DimensionError(f"{name} is empty")
    if not np.all(np.isfinite(X)):
        raise DimensionError(f"{name} contains NaN or Inf")
    if check_range and (X.min() < 0 or X.max() > 1):
        raise DimensionError(f"{name} pixel values must lie in [0, 1]")
    return X


@dataclass(frozen=True)
class CorruptionModel:
    epsilon: float
    A_star: np.ndarray
    B_star: np.ndarray
    A_inv: np.ndarray
    B_inv: np.ndarray


@dataclass(frozen=True)
class CorrectionMatrices:
    """``A_hat[c]`` is H x H and ``B_hat[c]`` is W x W for channel c."""

    A_hat: np.ndarray
    B_hat: np.ndarray

    @property
    def shape(self):
        return self.A_hat.shape[1], self.B_hat.shape[1]


@dataclass(frozen=True)
class DistanceReport:
    D_on: np.ndarray
    D_oc: np.ndarray

    @property
    def mean_on(self):
        return float(self.D_on.mean())

    @property
    def mean_oc(self):
        return float(self.D_oc.mean())

    @property
    def std_on(self):
        return float(self.D_on.std())

    @property
    def std_oc(self):
        return float(self.D_oc.std())


def build_corruption(H, W, epsilon, seed):
    """Row-normalised ``I + eps E1`` on the left, ``I + eps E2`` on the right."""
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    rng = child_rng(seed)
    A = np.eye(H) + epsilon * rng.standard_normal((H, H))
    B = np.eye(W) + epsilon * rng.standard_normal((W, W))
    A = A / A.sum(axis=1, keepdims=True)
    for name, M in (("A*", A), ("B*", B)):
        cond = np.linalg.cond(M)
        if not cond < MAX_CONDITION:
            raise IllConditionedError(
                f"{name} has condition number {cond:.3e}; try another seed", condition=cond
            )
    return CorruptionModel(epsilon, A, B, np.linalg.inv(A), np.linalg.inv(B))


def _two_sided(left, batch, right):
    if left.ndim == 2:
        return np.einsum("ab,ncbd,de->ncae", left, batch, right, optimize=True)
    return np.einsum("cab,ncbd,cde->ncae", left, batch, right, optimize=True)


def corrupt_batch(batch, model):
    """Apply ``inv(A*) X inv(B*)`` to every channel; no clamping."""
    X = as_batch(batch)
    if X.shape[2:] != (model.A_star.shape[0], model.B_star.shape[0]):
        raise DimensionError(f"images are {X.shape[2:]}, model expects "
                             f"{(model.A_star.shape[0], model.B_star.shape[0])}")
    return _two_sided(model.A_inv, X, model.B_inv)


def fit_correction(noisy_train, clean_train):
    noisy = as_batch(noisy_train, "noisy_train")
    clean = as_batch(clean_train, "clean_train")
    if noisy.shape != clean.shape:
        raise DimensionError(f"noisy {noisy.shape} and clean {clean.shape} batches differ")
    A_hats, B_hats = [], []
    for c in range(3):
        data = Dataset(noisy[:, c], clean[:, c])
        try:
            C = compute_C_hat(data)
        except SingularDesignError as exc:
            H, W = noisy.shape[2:]
            raise SingularDesignError(
                f"channel {c}: {exc}; use at least H*W = {H * W} diverse training images",
                condition=exc.condition,
            ) from exc
        A_tilde, _, _ = estimate_A_tilde(C)
        A_hats.append(estimate_A_hat(A_tilde)[0])
        B_hats.append(estimate_B_hat(C))
    return CorrectionMatrices(np.stack(A_hats), np.stack(B_hats))


def apply_correction(noisy_test, corrections):
    X = as_batch(noisy_test, "noisy_test")
    if X.shape[2:] != corrections.shape:
        raise DimensionError(f"images are {X.shape[2:]}, corrections fit {corrections.shape}")
    return _two_sided(corrections.A_hat, X, corrections.B_hat)


def evaluate_distances(original, noisy, corrected):
    """Per-image squared Frobenius distances summed over the channels."""
    O = as_batch(original, "original")
    N = as_batch(noisy, "noisy")
    C = as_batch(corrected, "corrected")
    if not (O.shape == N.shape == C.shape):
        raise DimensionError("original, noisy and corrected batches are misaligned")
    return DistanceReport(((O - N) ** 2).sum(axis=(1, 2, 3)), ((O - C) ** 2).sum(axis=(1, 2, 3)))


def synthetic_batch(count, H, W, seed, smoothness=1.0):
    """Seeded smooth random RGB fields scaled into [0, 1]."""
    rng = child_rng(seed)
    raw = rng.standard_normal((count, 3, H, W))
    smooth = gaussian_filter(raw, sigma=(0, 0, smoothness, smoothness), mode="wrap")
    lo = smooth.min(axis=(1, 2, 3), keepdims=True)
    hi = smooth.max(axis=(1, 2, 3), keepdims=True)
    return (smooth - lo) / (hi - lo)


def load_png_dir(directory):
    """Load every ``*.png`` in ``directory`` (sorted by name) as RGB in [0, 1]."""
    from PIL import Image

    paths = sorted(Path(directory).glob("*.png"))
    if not paths:
        raise FileNotFoundError(f"no PNG images in {directory}")
    images = []
    for path in paths:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=float) / 255.0
        if images and arr.shape != images[0].shape:
            raise DimensionError(f"{path.name} is {arr.shape[:2]}, expected {images[0].shape[:2]}")
        images.append(arr)
    return np.stack(images).transpose(0, 3, 1, 2)


def save_png(path, image):
    """Write one (3, H, W) image, clamped to [0, 1] and quantised to 8 bits."""
    from PIL import Image

    arr = np.clip(np.asarray(image, dtype=float), 0.0, 1.0).transpose(1, 2, 0)
    Image.fromarray(np.round(arr * 255).astype(np.uint8), "RGB").save(path)


def save_corrections(corrections, directory, meta=None):
    """Store the per-channel matrices in the dataset binary layout.

    Observation ``c`` holds ``A_hat[c]`` as predictor and ``B_hat[c]`` as
    response.
    """
    info = {"design": "corrections"}
    info.update(meta or {})
    return save_dataset(Dataset(corrections.A_hat, corrections.B_hat), directory, info)


def load_corrections(directory):
    data, _ = load_dataset(directory)
    return CorrectionMatrices(data.predictors, data.responses)


def run_pipeline(clean_train, clean_test, epsilon, seed):
    """Corrupt both batches, fit on train, correct test.

    Returns ``(report, noisy_test, corrected_test, corrections, model)``.
    """
    clean_train = as_batch(clean_train, "clean_train", check_range=True)
    clean_test = as_batch(clean_test, "clean_test", check_range=True)
    H, W = clean_train.shape[2:]
    model = build_corruption(H, W, epsilon, seed)
    noisy_train = corrupt_batch(clean_train, model)
    noisy_test = corrupt_batch(clean_test, model)
    corrections = fit_correction(noisy_train, clean_train)
    corrected = apply_correction(noisy_test, corrections)
    report = evaluate_distances(clean_test, noisy_test, corrected)
    return report, noisy_test, corrected, corrections, model
