"""Input validation helpers used at every public API boundary.

The converters return contiguous numpy arrays so downstream code can rely
on dtype/shape without re-checking.
"""

import numpy as np

from .errors import ConfigError, DataError

PATCH_SIZE = 16
EMBED_DIM = 128


def check_image_array(pixels, name="image"):
    """Coerce to an H x W x 3 float array with values in [0, 1]."""
    arr = np.asarray(pixels, dtype=np.float32)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DataError(f"{name}: expected H x W x 3 pixels, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DataError(f"{name}: empty image {arr.shape}")
    if not np.isfinite(arr).all():
        raise DataError(f"{name}: non-finite pixel values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise DataError(f"{name}: pixel values outside [0, 1]")
    return np.ascontiguousarray(arr)


def check_patch_batch(patches, name="patches", dtype=np.float32):
    """Coerce to an N x 16 x 16 x 3 batch; accepts a single patch too."""
    arr = np.asarray(patches, dtype=dtype)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[1:] != (PATCH_SIZE, PATCH_SIZE, 3):
        raise DataError(
            f"{name}: expected N x {PATCH_SIZE} x {PATCH_SIZE} x 3, got shape {arr.shape}"
        )
    if not np.isfinite(arr).all():
        raise DataError(f"{name}: non-finite values")
    return np.ascontiguousarray(arr)


def check_label_array(labels, name="label map"):
    """Coerce to an H x W array of non-negative integer segment ids."""
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise DataError(f"{name}: expected H x W integers, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.round(arr)):
            raise DataError(f"{name}: non-integer labels")
        arr = arr.astype(np.int64)
    if arr.size == 0:
        raise DataError(f"{name}: empty label map")
    if arr.min() < 0:
        raise DataError(f"{name}: negative segment ids")
    return np.ascontiguousarray(arr.astype(np.int32))


def check_positive(value, field, kind=float):
    try:
        value = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{field}: expected {kind.__name__}, got {value!r}") from None
    if value <= 0:
        raise ConfigError(f"{field}: must be > 0, got {value}")
    return value


def check_non_negative(value, field, kind=float):
    try:
        value = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{field}: expected {kind.__name__}, got {value!r}") from None
    if value < 0:
        raise ConfigError(f"{field}: must be >= 0, got {value}")
    return value


def rng_from(seed):
    """Build a Generator from an int seed, a seed tuple, or a SeedSequence."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(seed))


def derive_seed(*parts):
    """Deterministic child seed from integer components (seed, epoch, index...)."""
    return np.random.SeedSequence(tuple(int(p) for p in parts))
