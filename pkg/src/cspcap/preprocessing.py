"""Blind band-of-interest detection, centering/filtering and unit-total-power scaling."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage, signal
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import as_complex_frames, as_iq_pairs, check_power_of_two
from .synthesis import IQFrame


@dataclass(frozen=True)
class BoiEstimate:
    center_freq: float
    bandwidth: float
    noise_floor: float
    fallback: bool = False

    def __post_init__(self):
        if not 0 < self.bandwidth <= 1:
            raise ValueError(f"bandwidth must lie in (0, 1], got {self.bandwidth}")
        if not abs(self.center_freq) < 0.5:
            raise ValueError(f"center frequency must lie in (-0.5, 0.5), got {self.center_freq}")

    def as_dict(self) -> dict:
        return asdict(self)


FULL_BAND = BoiEstimate(0.0, 1.0, 0.0, fallback=True)


def _samples(frame) -> np.ndarray:
    if isinstance(frame, IQFrame):
        return frame.iq
    x = np.asarray(frame)
    if not np.iscomplexobj(x) and x.ndim == 2 and x.shape[1] == 2:
        return x[:, 0] + 1j * x[:, 1]
    return x.astype(complex, copy=False)


def estimate_psd(frame, segment_length: int = 1024, overlap: float = 0.5):
    """Averaged periodogram (Hann, two-sided), ordered from -0.5 to 0.5 cycles/sample.

    Returns ``(freqs, psd)``; ``psd.sum() / segment_length`` approximates the
    frame's mean power.
    """
    x = _samples(frame)
    check_power_of_two(segment_length, "segment_length")
    if x.size < segment_length:
        raise ValueError(f"frame of {x.size} samples is shorter than one segment ({segment_length})")
    f, p = signal.welch(x, fs=1.0, window="hann", nperseg=segment_length,
                        noverlap=int(segment_length * overlap), detrend=False,
                        return_onesided=False, scaling="density")
    return np.fft.fftshift(f), np.fft.fftshift(p)


def detect_boi(psd, threshold_factor: float = 3.0, gap_bins: int = 5) -> BoiEstimate:
    """Energy detector on a centered PSD.

    Bins above ``threshold_factor`` times the median bin are closed over gaps
    shorter than ``gap_bins``; the longest run is the band, its power-weighted
    centroid the center frequency. Returns a flagged full-band estimate when
    nothing crosses the threshold.
    """
    psd = np.asarray(psd, dtype=float)
    if psd.size == 0:
        raise ValueError("empty PSD")
    n = psd.size
    floor = float(np.median(psd))
    above = psd > floor * threshold_factor
    if not above.any():
        return BoiEstimate(0.0, 1.0, floor, fallback=True)
    if gap_bins > 1:
        # Pad so closing does not erode runs that touch the band edges.
        padded = np.pad(above, gap_bins, mode="edge")
        above = ndimage.binary_closing(padded, structure=np.ones(gap_bins, bool))[gap_bins:-gap_bins]
    labels, count = ndimage.label(above)
    sizes = np.bincount(labels.ravel())[1:]
    run = np.flatnonzero(labels == 1 + int(np.argmax(sizes)))
    freqs = (np.arange(n) - n // 2) / n
    weights = psd[run]
    center = float(np.sum(freqs[run] * weights) / np.sum(weights))
    bandwidth = min(run.size / n, 1.0)
    return BoiEstimate(center, bandwidth, floor)


def _raised_cosine_mask(n: int, half_width: float, transition_bins: int) -> np.ndarray:
    freqs = np.abs(np.fft.fftfreq(n))
    excess = (freqs - half_width) * n
    mask = np.ones(n)
    ramp = (excess > 0) & (excess < transition_bins)
    mask[ramp] = 0.5 * (1 + np.cos(np.pi * excess[ramp] / transition_bins))
    mask[excess >= transition_bins] = 0.0
    return mask


def apply_boi(frame, boi: BoiEstimate, guard_factor: float = 1.2, transition_bins: int = 32):
    """Shift the band to zero frequency and mask out-of-band noise in the FFT domain."""
    x = _samples(frame)
    n = x.size
    t = np.arange(n)
    y = x * np.exp(-2j * np.pi * boi.center_freq * t)
    half = guard_factor * boi.bandwidth / 2
    if half < 0.5:
        y = np.fft.ifft(np.fft.fft(y) * _raised_cosine_mask(n, half, transition_bins))
    if isinstance(frame, IQFrame):
        return frame.with_samples(y, boi=boi.as_dict())
    return y


def normalize_utp(frame):
    """Scale to unit mean power, mean(I^2 + Q^2) = 1.

    For an ``IQFrame`` the applied scale factor is stored in ``meta["scale"]``;
    for raw arrays ``(normalized, scale)`` is returned.
    """
    x = _samples(frame)
    power = float(np.mean(x.real ** 2 + x.imag ** 2))
    if power == 0.0:
        raise ValueError("cannot normalize an all-zero frame")
    scale = 1.0 / np.sqrt(power)
    y = x * scale
    if isinstance(frame, IQFrame):
        return frame.with_samples(y, scale=scale)
    return y, scale


def preprocess_frame(x, segment_length=1024, overlap=0.5, threshold_factor=3.0, gap_bins=5,
                     guard_factor=1.2, transition_bins=32):
    """Full chain on one complex frame: returns ``(y, boi, scale)``."""
    x = np.asarray(x, dtype=complex)
    seg = min(segment_length, x.size)
    _, psd = estimate_psd(x, seg, overlap)
    boi = detect_boi(psd, threshold_factor, gap_bins)
    y = apply_boi(x, boi, guard_factor, transition_bins)
    y, scale = normalize_utp(y)
    return y, boi, scale


class BOIFilter(TransformerMixin, BaseEstimator):
    """Blind band-of-interest centering and out-of-band filtering for frame batches.

    Input frames are ``(n, L, 2)`` real I/Q pairs or ``(n, L)`` complex; the
    output keeps the input layout. Stateless: ``fit`` only validates.
    """

    def __init__(self, segment_length=1024, overlap=0.5, threshold_factor=3.0, gap_bins=5,
                 guard_factor=1.2, transition_bins=32):
        self.segment_length = segment_length
        self.overlap = overlap
        self.threshold_factor = threshold_factor
        self.gap_bins = gap_bins
        self.guard_factor = guard_factor
        self.transition_bins = transition_bins

    def fit(self, X, y=None):
        as_complex_frames(X)
        return self

    def estimate(self, X) -> list[BoiEstimate]:
        Z = as_complex_frames(X)
        seg = min(self.segment_length, Z.shape[1])
        return [detect_boi(estimate_psd(z, seg, self.overlap)[1], self.threshold_factor, self.gap_bins)
                for z in Z]

    def transform(self, X):
        Z = as_complex_frames(X)
        out = np.stack([apply_boi(z, b, self.guard_factor, self.transition_bins)
                        for z, b in zip(Z, self.estimate(Z))])
        return out if np.iscomplexobj(X) else as_iq_pairs(out, np.asarray(X).dtype)


class UnitPowerNormalizer(TransformerMixin, BaseEstimator):
    """Per-frame unit-total-power scaling (signal plus noise)."""

    def fit(self, X, y=None):
        as_complex_frames(X)
        return self

    def transform(self, X):
        Z = as_complex_frames(X)
        power = np.mean(Z.real ** 2 + Z.imag ** 2, axis=1, keepdims=True)
        if np.any(power == 0):
            raise ValueError("cannot normalize an all-zero frame")
        out = Z / np.sqrt(power)
        return out if np.iscomplexobj(X) else as_iq_pairs(out, np.asarray(X).dtype)


def preprocess_dataset(dataset, **params):
    """Apply the full chain to every frame of a ``FrameDataset``; returns a new dataset."""
    from .frames import FrameDataset

    iq = np.empty_like(dataset.iq, dtype=np.float32)
    extras = []
    for k in range(len(dataset)):
        x = dataset.iq[k, :, 0].astype(float) + 1j * dataset.iq[k, :, 1].astype(float)
        y, boi, scale = preprocess_frame(x, **params)
        iq[k, :, 0] = y.real
        iq[k, :, 1] = y.imag
        extras.append({"scale": float(scale), "boi": boi.as_dict()})
    config = dict(dataset.config)
    config["preprocess"] = dict(params)
    return FrameDataset(iq, dataset.records.copy(), config, True, extras)
