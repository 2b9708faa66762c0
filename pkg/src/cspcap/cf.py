"""Cycle-frequency ground truth and spectral-line detection on FREQ features.

Lines of the order-n (no conjugation) transform sit at
``alpha = (n - 2m) f0 ± k / T0``, wrapped to (-0.5, 0.5] at unit sample rate.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from importlib import resources

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .synthesis import FrameSpec, ModulationScheme, synthesize_frame

K_MAX = 5
ORDERS = (2, 4, 6, 8)


class CFPattern(enum.Enum):
    BPSK_LIKE = "BPSK-like"
    QAM_LIKE = "QAM-like"
    DQPSK_PI4_LIKE = "pi/4-DQPSK-like"
    PSK8_LIKE = "8-PSK-like"
    SQPSK_LIKE = "SQPSK-like"


# MSK stands in for the staggered-QPSK pattern; no SQPSK class is synthesized.
SCHEME_PATTERN = {
    ModulationScheme.BPSK: CFPattern.BPSK_LIKE,
    ModulationScheme.QPSK: CFPattern.QAM_LIKE,
    ModulationScheme.QAM16: CFPattern.QAM_LIKE,
    ModulationScheme.QAM64: CFPattern.QAM_LIKE,
    ModulationScheme.QAM256: CFPattern.QAM_LIKE,
    ModulationScheme.PSK8: CFPattern.PSK8_LIKE,
    ModulationScheme.DQPSK_PI4: CFPattern.DQPSK_PI4_LIKE,
    ModulationScheme.MSK: CFPattern.SQPSK_LIKE,
}


@dataclass(frozen=True)
class CFParams:
    n: int
    f0: float
    T0: float
    m: int = 0
    k_max: int = K_MAX

    def __post_init__(self):
        if self.n <= 0 or self.n % 2:
            raise ValueError(f"order must be a positive even integer, got {self.n}")
        if not 0 <= self.m <= self.n:
            raise ValueError("conjugation count must lie in [0, n]")
        if not 0 <= self.k_max <= K_MAX:
            raise ValueError(f"k_max must lie in [0, {K_MAX}]")
        if self.T0 == 0:
            raise ValueError("T0 must be nonzero")


def wrap_frequency(alpha):
    """Map to (-0.5, 0.5]."""
    return 0.5 - np.mod(0.5 - np.asarray(alpha, dtype=float), 1.0)


def cycle_frequencies(params: CFParams, decimals: int = 12) -> np.ndarray:
    """Sorted, de-duplicated cycle frequencies for k = 0..k_max."""
    base = (params.n - 2 * params.m) * params.f0
    k = np.arange(params.k_max + 1)
    alphas = np.concatenate([base + k / params.T0, base - k / params.T0])
    return np.unique(np.round(wrap_frequency(alphas), decimals))


@dataclass(frozen=True)
class SpectralLine:
    frequency: float
    prominence_db: float
    index: int


def detect_spectral_lines(freq_feature, min_prominence_db: float = 10.0, smooth_bins: int = 9,
                          reference_bins: int = 256, dynamic_range_db: float = 40.0) -> list[SpectralLine]:
    """Narrow peaks in a centered |FFT| feature, strongest first.

    Power is boxcar-smoothed over ``smooth_bins`` so a line's leakage is
    gathered; each local maximum is compared against the larger of the median
    smoothed power in the ``reference_bins`` on either side (beyond a guard of
    ``smooth_bins``; at most a quarter of the spectrum). Peaks more than
    ``dynamic_range_db`` below the strongest smoothed bin are ignored. The reported frequency is the strongest raw bin
    near the peak, ``(index - N/2) / N``.
    """
    mag = np.asarray(freq_feature, dtype=float).reshape(-1)
    n = mag.size
    power = mag ** 2
    smooth = ndimage.uniform_filter1d(power, smooth_bins, mode="wrap")
    if n < 4 * smooth_bins:
        raise ValueError(f"spectrum of {n} bins is too short for {smooth_bins}-bin smoothing")
    # Short spectra get a reference window of at most a quarter of the band.
    guard, w = smooth_bins, min(reference_bins, n // 4)
    c = guard + w
    padded = np.concatenate([smooth[-c:], smooth, smooth[:c]])
    # medians[j] is the median of padded[j:j + w]
    medians = np.median(sliding_window_view(padded, w), axis=1)
    i = np.arange(n)
    right = medians[c + i + guard + 1]
    left = medians[c + i - guard - w]
    reference = np.maximum(np.maximum(left, right), np.finfo(float).tiny)
    local_max = smooth == ndimage.maximum_filter1d(smooth, 2 * guard + 1, mode="wrap")
    prominence = 10 * np.log10(np.maximum(smooth, np.finfo(float).tiny) / reference)
    lines = []
    strong = smooth >= smooth.max() * 10 ** (-dynamic_range_db / 10)
    for i in np.flatnonzero(local_max & strong & (prominence >= min_prominence_db)):
        lo, hi = i - guard // 2, i + guard // 2 + 1
        window = np.arange(lo, hi) % n
        peak = int(window[np.argmax(power[window])])
        lines.append(SpectralLine((peak - n // 2) / n, float(prominence[i]), peak))
    # Plateaus can yield several maxima for one line; keep the strongest per peak bin.
    unique = {}
    for line in lines:
        if line.index not in unique or line.prominence_db > unique[line.index].prominence_db:
            unique[line.index] = line
    return sorted(unique.values(), key=lambda s: -s.prominence_db)


def nearest_cycle_frequency(freq: float, alphas) -> float:
    """Circular distance from ``freq`` to the closest element of ``alphas``."""
    d = np.abs(wrap_frequency(np.asarray(alphas) - freq))
    return float(d.min())


def predicted_cycle_frequencies(scheme, n: int, f0: float, T0: float) -> np.ndarray:
    """Cycle frequencies where ``scheme`` can show order-``n`` lines.

    MSK and pi/4-DQPSK alternate between two phase sets, which adds lines at
    odd multiples of half the symbol rate; for them the harmonic grid is
    ``j / (2 T0)`` for ``j = 0..2 K_MAX``.
    """
    scheme = ModulationScheme.parse(scheme)
    alphas = cycle_frequencies(CFParams(n, f0, T0))
    if scheme in (ModulationScheme.MSK, ModulationScheme.DQPSK_PI4):
        j = np.arange(2 * K_MAX + 1)
        half = n * f0 + np.concatenate([j, -j]) / (2 * T0)
        alphas = np.unique(np.concatenate([alphas, np.round(wrap_frequency(half), 12)]))
    return alphas


def calibrate_min_orders(T0=10, beta=0.35, f0=0.01, length=32768, seeds=(11, 12, 13),
                         prominence_db=10.0) -> dict[str, int | None]:
    """Smallest order with a line near a predicted cycle frequency, per scheme.

    Runs the detector on noiseless synthesized frames; an order counts only if
    every seed shows a line within 2 bins of a predicted cycle frequency.
    """
    from .features import extract_features

    table = {}
    tol = 2.0 / length
    for scheme in ModulationScheme:
        found = None
        for n in ORDERS:
            hits = 0
            alphas = predicted_cycle_frequencies(scheme, n, f0, T0)
            for seed in seeds:
                spec = FrameSpec(scheme, T0, None if scheme is ModulationScheme.MSK else beta, f0, np.inf,
                                 length, seed)
                feats = extract_features(synthesize_frame(spec), np.float64, (f"FREQ{n}",))
                lines = detect_spectral_lines(next(iter(feats.values())), prominence_db)
                if any(nearest_cycle_frequency(s.frequency, alphas) <= tol for s in lines):
                    hits += 1
            if hits == len(seeds):
                found = n
                break
        table[scheme.name] = found
    return table


def _golden_table() -> dict:
    text = resources.files("cspcap").joinpath("data/min_order.json").read_text()
    return json.loads(text)


def expected_min_order(scheme) -> int | None:
    """Calibrated smallest order with a detectable non-conjugate line, or None."""
    return _golden_table()["min_order"][ModulationScheme.parse(scheme).name]
