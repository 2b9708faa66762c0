"""Nonlinear feature layers: even powers of the I/Q signal and centered FFT magnitudes.

The layers operate on real ``(..., L, 2)`` I/Q pair arrays so they read the
same way the network consumes them. Everything here is forward-only; there
are no learnable parameters.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_complex_frames, as_iq_pairs, check_power_of_two


class FeatureKind(enum.Enum):
    TIME2 = ("time", 2)
    TIME4 = ("time", 4)
    TIME6 = ("time", 6)
    TIME8 = ("time", 8)
    FREQ2 = ("freq", 2)
    FREQ4 = ("freq", 4)
    FREQ6 = ("freq", 6)
    FREQ8 = ("freq", 8)

    @property
    def domain(self) -> str:
        return self.value[0]

    @property
    def order(self) -> int:
        return self.value[1]

    @property
    def channels(self) -> int:
        return 2 if self.domain == "time" else 1

    @classmethod
    def parse(cls, name) -> "FeatureKind":
        return name if isinstance(name, cls) else cls[str(name).upper()]


ALL_KINDS = tuple(FeatureKind)


def square_layer(x: np.ndarray) -> np.ndarray:
    """(I, Q) -> (I^2 - Q^2, 2 I Q), i.e. the complex square."""
    i, q = x[..., 0], x[..., 1]
    return np.stack([i * i - q * q, 2 * i * q], axis=-1)


def pow3_layer(x: np.ndarray) -> np.ndarray:
    """(I, Q) -> (I^3 - 3 I Q^2, 3 I^2 Q - Q^3), i.e. the complex cube."""
    i, q = x[..., 0], x[..., 1]
    return np.stack([i * i * i - 3 * i * q * q, 3 * i * i * q - q * q * q], axis=-1)


def fft_mag_layer(x: np.ndarray) -> np.ndarray:
    """|FFT| along the sample axis with the zero-frequency bin at index L/2.

    Output shape is ``(..., L, 1)``.
    """
    check_power_of_two(x.shape[-2], "FFT length")
    spec = np.fft.fft(x[..., 0] + 1j * x[..., 1], axis=-1)
    return np.abs(np.fft.fftshift(spec, axes=-1))[..., None]


@dataclass
class FeatureTensor:
    data: np.ndarray
    kind: FeatureKind

    def __post_init__(self):
        if self.data.shape[-1] != self.kind.channels:
            raise ValueError(f"{self.kind.name} needs {self.kind.channels} channels, got {self.data.shape[-1]}")


def extract_features(x, dtype=np.float32, kinds=ALL_KINDS) -> dict[FeatureKind, np.ndarray]:
    """The eight-way feature tree for one frame or a batch.

    ``x`` is ``(..., L, 2)`` real I/Q pairs (an ``IQFrame`` is accepted too).
    Computation runs at 64-bit; results are cast to ``dtype``.
    """
    if hasattr(x, "iq"):
        x = as_iq_pairs(x.iq, np.float64)
    x = np.asarray(x, dtype=np.float64)
    kinds = tuple(FeatureKind.parse(k) for k in kinds)
    x2 = square_layer(x)
    x4 = square_layer(x2)
    time = {2: x2, 4: x4}
    orders = {k.order for k in kinds}
    if 6 in orders:
        time[6] = pow3_layer(x2)
    if 8 in orders:
        time[8] = square_layer(x4)
    out = {}
    for kind in kinds:
        t = time[kind.order]
        out[kind] = (t if kind.domain == "time" else fft_mag_layer(t)).astype(dtype, copy=False)
    return out


def feature_set(frame) -> dict[FeatureKind, FeatureTensor]:
    return {k: FeatureTensor(v, k) for k, v in extract_features(frame).items()}


class CSPFeatureExtractor(TransformerMixin, BaseEstimator):
    """Frames -> dict of standardized feature batches, one entry per kind.

    ``fit`` calibrates one scale per kind so that the mean absolute feature
    value over the calibration frames is 1.
    """

    def __init__(self, kinds=tuple(k.name for k in ALL_KINDS), standardize=True,
                 calibration_frames=256, dtype=np.float32):
        self.kinds = kinds
        self.standardize = standardize
        self.calibration_frames = calibration_frames
        self.dtype = dtype

    def _kinds(self):
        return tuple(FeatureKind.parse(k) for k in self.kinds)

    def fit(self, X, y=None):
        Z = as_complex_frames(X)
        check_power_of_two(Z.shape[1], "frame length")
        scales = {}
        if self.standardize:
            sums = dict.fromkeys(self._kinds(), 0.0)
            sample = Z[: self.calibration_frames]
            for z in sample:
                feats = extract_features(as_iq_pairs(z, np.float64), np.float64, self._kinds())
                for k, v in feats.items():
                    sums[k] += float(np.mean(np.abs(v)))
            scales = {k.name: 1.0 / max(sums[k] / len(sample), np.finfo(float).tiny) for k in sums}
        else:
            scales = {k.name: 1.0 for k in self._kinds()}
        self.scales_ = scales
        self.frame_length_ = Z.shape[1]
        return self

    def transform(self, X) -> dict[FeatureKind, np.ndarray]:
        check_is_fitted(self, "scales_")
        Z = as_complex_frames(X)
        feats = extract_features(as_iq_pairs(Z, np.float64), np.float64, self._kinds())
        return {k: (v * self.scales_[k.name]).astype(self.dtype, copy=False) for k, v in feats.items()}
