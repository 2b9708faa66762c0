"""Input validation helpers shared by the estimators and the DSP functions."""

from __future__ import annotations

import numpy as np


def is_power_of_two(n) -> bool:
    n = int(n)
    return n > 0 and n & (n - 1) == 0


def check_power_of_two(n, what="length"):
    if not is_power_of_two(n):
        raise ValueError(f"{what} must be a power of two, got {n}")
    return int(n)


def as_complex_frames(X, dtype=np.complex128) -> np.ndarray:
    """Coerce frames to a complex ``(n_frames, length)`` array.

    Accepts complex arrays of shape ``(n, L)`` or ``(L,)`` and real arrays with a
    trailing I/Q axis, ``(n, L, 2)`` or ``(L, 2)``.
    """
    X = np.asarray(X)
    if np.iscomplexobj(X):
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2:
            raise ValueError(f"complex frames must be 1-D or 2-D, got shape {X.shape}")
        out = X.astype(dtype, copy=False)
    else:
        if X.ndim == 2 and X.shape[-1] == 2:
            X = X[None]
        if X.ndim != 3 or X.shape[-1] != 2:
            raise ValueError(f"real frames must have shape (n, length, 2), got {X.shape}")
        real = np.float64 if dtype == np.complex128 else np.float32
        Xr = X.astype(real, copy=False)
        out = Xr[..., 0] + 1j * Xr[..., 1]
    if not np.all(np.isfinite(out)):
        raise ValueError("frames contain non-finite samples")
    return out


def as_iq_pairs(Z, dtype=np.float32) -> np.ndarray:
    """Complex ``(n, L)`` frames to real ``(n, L, 2)`` I/Q pairs."""
    Z = np.asarray(Z)
    return np.stack([Z.real, Z.imag], axis=-1).astype(dtype, copy=False)


def check_labels(y, n):
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n:
        raise ValueError(f"expected {n} labels, got shape {y.shape}")
    return y
