"""Labeled I/Q frame synthesis for the eight digital modulation classes.

Linear schemes are SRRC pulse shaped; MSK is generated as continuous-phase
FSK with modulation index 0.5. All frequencies are in cycles/sample (fs = 1).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import is_power_of_two

# Fraction of the MSK spectrum width (in units of 1/T0) holding 99% of its power.
MSK_99_BANDWIDTH = 1.1818146151887385

DEFAULT_SPAN_SYMBOLS = 16


class ModulationScheme(enum.IntEnum):
    BPSK = 0
    QPSK = 1
    PSK8 = 2
    DQPSK_PI4 = 3
    MSK = 4
    QAM16 = 5
    QAM64 = 6
    QAM256 = 7

    @property
    def bits_per_symbol(self) -> int:
        return _BITS_PER_SYMBOL[self]

    @property
    def is_linear(self) -> bool:
        return self is not ModulationScheme.MSK

    @classmethod
    def parse(cls, name) -> "ModulationScheme":
        if isinstance(name, cls):
            return name
        if isinstance(name, (int, np.integer)):
            return cls(int(name))
        key = str(name).upper().replace("-", "").replace("/", "")
        aliases = {"8PSK": "PSK8", "PI4DQPSK": "DQPSK_PI4", "Π4DQPSK": "DQPSK_PI4",
                   "16QAM": "QAM16", "64QAM": "QAM64", "256QAM": "QAM256"}
        key = aliases.get(key, key)
        try:
            return cls[key]
        except KeyError:
            raise ValueError(f"unknown modulation scheme {name!r}") from None


_BITS_PER_SYMBOL = {
    ModulationScheme.BPSK: 1,
    ModulationScheme.QPSK: 2,
    ModulationScheme.PSK8: 3,
    ModulationScheme.DQPSK_PI4: 2,
    ModulationScheme.MSK: 1,
    ModulationScheme.QAM16: 4,
    ModulationScheme.QAM64: 6,
    ModulationScheme.QAM256: 8,
}

ALL_SCHEMES = tuple(ModulationScheme)


def _gray(n: np.ndarray) -> np.ndarray:
    return n ^ (n >> 1)


def _bits_to_ints(bits: np.ndarray, width: int) -> np.ndarray:
    weights = 1 << np.arange(width - 1, -1, -1)
    return bits.reshape(-1, width) @ weights


def _psk_points(order: int) -> np.ndarray:
    # Index is the Gray label; neighbours on the circle differ by one bit.
    pts = np.empty(order, dtype=complex)
    pts[_gray(np.arange(order))] = np.exp(2j * np.pi * np.arange(order) / order)
    return pts


def _qam_points(order: int) -> np.ndarray:
    side = int(round(math.sqrt(order)))
    half = side.bit_length() - 1
    levels = np.empty(side)
    levels[_gray(np.arange(side))] = 2 * np.arange(side) - side + 1
    idx = np.arange(order)
    pts = levels[idx >> half] + 1j * levels[idx & (side - 1)]
    # Mean energy of the {±1, ±3, ...}^2 grid is 2(M - 1)/3.
    return pts / math.sqrt(2 * (order - 1) / 3)


def constellation(scheme: ModulationScheme) -> np.ndarray:
    """Reference points indexed by bit label, unit average energy."""
    scheme = ModulationScheme.parse(scheme)
    if scheme is ModulationScheme.BPSK:
        return np.array([1.0 + 0j, -1.0 + 0j])
    if scheme is ModulationScheme.QPSK:
        return _psk_points(4) * np.exp(1j * np.pi / 4)
    if scheme is ModulationScheme.PSK8:
        return _psk_points(8)
    if scheme in (ModulationScheme.QAM16, ModulationScheme.QAM64, ModulationScheme.QAM256):
        return _qam_points(1 << scheme.bits_per_symbol)
    raise ValueError(f"{scheme.name} has no memoryless constellation")


# Phase increments (beyond the fixed pi/4 rotation) for dibits 00, 01, 10, 11.
_DQPSK_STEPS = np.array([0.0, 0.5, 1.5, 1.0]) * np.pi


def map_symbols(scheme, bits) -> np.ndarray:
    """Map a bit stream to complex symbols (or ±1 frequency symbols for MSK)."""
    scheme = ModulationScheme.parse(scheme)
    bits = np.asarray(bits, dtype=np.int64).ravel()
    width = scheme.bits_per_symbol
    if bits.size % width:
        raise ValueError(f"{bits.size} bits is not a multiple of {width} for {scheme.name}")
    labels = _bits_to_ints(bits, width)
    if scheme is ModulationScheme.MSK:
        return 1.0 - 2.0 * labels.astype(float)
    if scheme is ModulationScheme.DQPSK_PI4:
        phase = np.cumsum(np.pi / 4 + _DQPSK_STEPS[labels])
        return np.exp(1j * phase)
    return constellation(scheme)[labels]


def srrc_taps(beta: float, T0: int, span_symbols: int = DEFAULT_SPAN_SYMBOLS,
              delay: float = 0.0) -> np.ndarray:
    """Square-root raised-cosine taps, unit energy, ``span_symbols * T0 + 1`` long.

    ``delay`` (in samples) shifts the sampling grid for fractional timing offsets;
    with ``delay=0`` the taps are even-symmetric.
    """
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"roll-off must lie in (0, 1], got {beta}")
    if span_symbols < 8:
        raise ValueError("span_symbols must be at least 8")
    if T0 < 1:
        raise ValueError("T0 must be >= 1")
    half = span_symbols * T0 // 2
    t = (np.arange(-half, half + 1) - delay) / T0
    h = np.empty_like(t)
    zero = np.isclose(t, 0.0, atol=1e-12)
    sing = np.isclose(np.abs(t), 1.0 / (4.0 * beta), atol=1e-12)
    reg = ~(zero | sing)
    tr = t[reg]
    h[reg] = (np.sin(np.pi * tr * (1 - beta)) + 4 * beta * tr * np.cos(np.pi * tr * (1 + beta))) / (
        np.pi * tr * (1 - (4 * beta * tr) ** 2)
    )
    h[zero] = 1 - beta + 4 * beta / np.pi
    h[sing] = beta / math.sqrt(2) * (
        (1 + 2 / np.pi) * math.sin(np.pi / (4 * beta)) + (1 - 2 / np.pi) * math.cos(np.pi / (4 * beta))
    )
    return h / np.linalg.norm(h)


@dataclass(frozen=True)
class FrameSpec:
    scheme: ModulationScheme
    T0: int
    beta: float | None
    f0: float
    snr_db: float
    length: int = 32768
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scheme", ModulationScheme.parse(self.scheme))
        if not is_power_of_two(self.length):
            raise ValueError(f"frame length must be a power of two, got {self.length}")
        if int(self.T0) != self.T0 or self.T0 < 1:
            raise ValueError(f"T0 must be a positive integer, got {self.T0}")
        if self.scheme.is_linear:
            if self.beta is None or not 0.1 <= self.beta <= 1.0:
                raise ValueError(f"beta must lie in [0.1, 1], got {self.beta}")
        if not -0.5 < self.f0 < 0.5:
            raise ValueError(f"f0 must lie in (-0.5, 0.5), got {self.f0}")

    def occupied_bandwidth(self) -> float:
        if self.scheme is ModulationScheme.MSK:
            bw = MSK_99_BANDWIDTH / self.T0
        else:
            bw = (1.0 + self.beta) / self.T0
        return min(bw, 1.0)


@dataclass
class IQFrame:
    i: np.ndarray
    q: np.ndarray
    spec: FrameSpec | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.i = np.asarray(self.i, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        if self.i.shape != self.q.shape or self.i.ndim != 1:
            raise ValueError("I and Q must be 1-D and of equal length")
        if self.spec is not None and self.i.size != self.spec.length:
            raise ValueError("frame length does not match its FrameSpec")

    @classmethod
    def from_complex(cls, x, spec=None, meta=None) -> "IQFrame":
        x = np.asarray(x)
        return cls(x.real.copy(), x.imag.copy(), spec, dict(meta or {}))

    @property
    def iq(self) -> np.ndarray:
        return self.i + 1j * self.q

    def __len__(self):
        return self.i.size

    def with_samples(self, x, **meta) -> "IQFrame":
        return IQFrame(np.real(x).copy(), np.imag(x).copy(), self.spec, {**self.meta, **meta})


def _random_bits(rng, n):
    return rng.integers(0, 2, size=n)


def _linear_baseband(spec: FrameSpec, rng) -> np.ndarray:
    T0, n = spec.T0, spec.length
    delay = rng.uniform(0.0, 1.0)
    taps = srrc_taps(spec.beta, T0, DEFAULT_SPAN_SYMBOLS, delay)
    n_sym = -(-(n + taps.size) // T0) + 1
    symbols = map_symbols(spec.scheme, _random_bits(rng, n_sym * spec.scheme.bits_per_symbol))
    up = np.zeros(n_sym * T0, dtype=complex)
    up[::T0] = symbols
    shaped = np.convolve(up, taps)
    # Skip the filter ramp-up so every sample has full symbol support.
    start = taps.size - 1
    x = shaped[start:start + n]
    # SRRC with unit-energy taps and unit-energy symbols gives power 1/T0.
    return x * math.sqrt(T0)


def _msk_baseband(spec: FrameSpec, rng) -> np.ndarray:
    T0, n = spec.T0, spec.length
    delay = rng.uniform(0.0, 1.0)
    n_sym = n // T0 + 2
    freq = map_symbols(ModulationScheme.MSK, _random_bits(rng, n_sym))
    t = np.arange(n) + delay
    k = np.floor(t / T0).astype(int)
    frac = t / T0 - k
    accumulated = np.concatenate(([0.0], np.cumsum(freq)))
    # Modulation index 0.5: each symbol advances the phase by ±pi/2.
    phase = 0.5 * np.pi * (accumulated[k] + freq[k] * frac)
    return np.exp(1j * phase)


def synthesize_frame(spec: FrameSpec, rng=None) -> IQFrame:
    """Draw one noisy frame; ``snr_db = inf`` disables the noise.

    The random stream is consumed in a fixed order (signal first, then noise),
    so the same seed with a finite and an infinite SNR yields frames whose
    difference is exactly the added noise.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    if spec.scheme.is_linear and spec.length < DEFAULT_SPAN_SYMBOLS * spec.T0 + 1:
        raise ValueError("frame too short to hold the pulse-shaping filter span")
    if spec.scheme is ModulationScheme.MSK:
        x = _msk_baseband(spec, rng)
    else:
        x = _linear_baseband(spec, rng)
    phase0 = rng.uniform(0.0, 2 * np.pi)
    t = np.arange(spec.length)
    x = x * np.exp(1j * (2 * np.pi * spec.f0 * t + phase0))
    noise = rng.standard_normal((2, spec.length))
    if np.isfinite(spec.snr_db):
        signal_power = np.mean(np.abs(x) ** 2)
        # White noise of total power s2 puts s2 * B of it inside bandwidth B.
        s2 = signal_power / (10 ** (spec.snr_db / 10) * spec.occupied_bandwidth())
        x = x + math.sqrt(s2 / 2) * (noise[0] + 1j * noise[1])
    return IQFrame.from_complex(x, spec)


@dataclass(frozen=True)
class GenerationConfig:
    name: str = "dataset"
    frames_per_class: int = 100
    cfo_low: float = -0.001
    cfo_high: float = 0.001
    t0_min: int = 1
    t0_max: int = 23
    beta_min: float = 0.1
    beta_max: float = 1.0
    snr_min_db: float = 0.0
    snr_max_db: float = 12.0
    snr_center_db: float = 9.0
    frame_length: int = 32768
    master_seed: int = 0
    schemes: tuple = tuple(s.name for s in ALL_SCHEMES)

    def __post_init__(self):
        object.__setattr__(self, "schemes", tuple(ModulationScheme.parse(s).name for s in self.schemes))
        if not self.cfo_low < self.cfo_high:
            raise ValueError("cfo_low must be below cfo_high")
        if not -0.5 < self.cfo_low or not self.cfo_high < 0.5:
            raise ValueError("CFO bounds must lie inside (-0.5, 0.5)")
        if not 1 <= self.t0_min <= self.t0_max:
            raise ValueError("symbol-period range is empty")
        if not 0.1 <= self.beta_min <= self.beta_max <= 1.0:
            raise ValueError("roll-off range must lie inside [0.1, 1]")
        if not self.snr_min_db < self.snr_max_db:
            raise ValueError("SNR range is empty")
        if not self.snr_min_db < self.snr_center_db < self.snr_max_db:
            raise ValueError("snr_center_db must lie strictly inside the SNR range")
        if not is_power_of_two(self.frame_length) or self.frame_length < 64:
            raise ValueError("frame_length must be a power of two >= 64")
        if self.frames_per_class < 1:
            raise ValueError("frames_per_class must be positive")
        if not self.schemes:
            raise ValueError("at least one scheme is required")

    def snr_beta_shape(self, concentration: float = 4.0) -> tuple[float, float]:
        """Beta(a, b) shape pinning the mean of the scaled SNR draw to the center."""
        m = (self.snr_center_db - self.snr_min_db) / (self.snr_max_db - self.snr_min_db)
        return concentration * m, concentration * (1 - m)

    def draw_snr(self, rng, size=None):
        a, b = self.snr_beta_shape()
        return self.snr_min_db + (self.snr_max_db - self.snr_min_db) * rng.beta(a, b, size)

    def scheme_list(self) -> list[ModulationScheme]:
        return [ModulationScheme[s] for s in self.schemes]

    def frame_specs(self) -> list[FrameSpec]:
        """Per-frame parameters, fully determined by ``master_seed``."""
        rng = np.random.default_rng(self.master_seed)
        specs = []
        for scheme in self.scheme_list():
            for _ in range(self.frames_per_class):
                f0 = rng.uniform(self.cfo_low, self.cfo_high)
                T0 = int(rng.integers(self.t0_min, self.t0_max + 1))
                beta = rng.uniform(self.beta_min, self.beta_max)
                snr = float(self.draw_snr(rng))
                seed = int(rng.integers(0, 2**63))
                # Stored at 32-bit in frame files; round now so regeneration matches.
                beta = float(np.float32(beta)) if scheme.is_linear else None
                specs.append(FrameSpec(scheme, T0, beta, float(f0), float(np.float32(snr)),
                                       self.frame_length, seed))
        return specs

    def with_overrides(self, **kw) -> "GenerationConfig":
        return replace(self, **kw)


# Table-style reference configurations of the two emulated datasets.
CONFIG_2018 = GenerationConfig(name="cspb2018_like", cfo_low=-0.001, cfo_high=0.001, t0_min=1, t0_max=23,
                               snr_min_db=0.0, snr_max_db=12.0, snr_center_db=9.0)
CONFIG_2022 = GenerationConfig(name="cspb2022_like", cfo_low=0.01, cfo_high=0.02, t0_min=1, t0_max=29,
                               snr_min_db=1.0, snr_max_db=18.0, snr_center_db=12.0)
