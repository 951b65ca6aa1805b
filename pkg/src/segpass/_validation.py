"""Input validation helpers shared by the functional and estimator APIs."""

import numpy as np

from .exceptions import DimensionMismatch


def check_channel_matrix(H, *, name="H"):
    """Return ``H`` as a finite complex array of shape (K, M).

    A 1-D input is read as one coefficient per UE (M = 1). sklearn's
    ``check_array`` refuses complex data, hence this small replacement.
    """
    arr = np.asarray(H)
    if arr.dtype == object:
        raise TypeError(f"{name} must be numeric")
    arr = arr.astype(complex, copy=True)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D (num_ues, num_branches), got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionMismatch(f"{name} has an empty dimension: {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinity")
    return arr


def check_per_ue(value, num_ues, *, name, positive=False, allow_zero=True):
    """Broadcast a scalar or per-UE sequence to a float vector of length ``num_ues``."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(num_ues, float(arr))
    if arr.shape != (num_ues,):
        raise DimensionMismatch(f"{name} must be a scalar or have {num_ues} entries, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    if positive and np.any(arr <= 0):
        raise ValueError(f"{name} must be > 0")
    if not allow_zero and np.any(arr == 0):
        raise ValueError(f"{name} must be nonzero")
    if np.any(arr < 0):
        raise ValueError(f"{name} must be >= 0")
    return arr


def check_complex_vector(x, size, *, name):
    arr = np.asarray(x, dtype=complex).reshape(-1)
    if arr.shape != (size,):
        raise DimensionMismatch(f"{name} must have {size} entries, got {arr.size}")
    return arr
