"""Run configuration: TOML sections ``[dataset] [preprocess] [features] [model] [train] [eval]``.

Every key is optional and defaults to the reference values; unknown
sections or keys are rejected before any work starts.
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .features import ALL_KINDS, FeatureKind
from .model import REFERENCE_FILTERS, REFERENCE_KERNEL
from .synthesis import GenerationConfig

CONFIG_ECHO = "config.resolved.toml"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PreprocessSettings:
    enabled: bool = True
    segment_length: int = 1024
    overlap: float = 0.5
    threshold_factor: float = 3.0
    gap_bins: int = 5
    guard_factor: float = 1.2
    transition_bins: int = 32

    def __post_init__(self):
        if self.segment_length < 16:
            raise ValueError("segment_length must be at least 16")
        if not 0 <= self.overlap < 1:
            raise ValueError("overlap must lie in [0, 1)")
        if self.threshold_factor <= 1:
            raise ValueError("threshold_factor must exceed 1")
        if self.gap_bins < 0 or self.transition_bins < 0:
            raise ValueError("bin counts must be non-negative")
        if self.guard_factor < 1:
            raise ValueError("guard_factor must be at least 1")

    def params(self) -> dict:
        out = asdict(self)
        out.pop("enabled")
        return out


@dataclass(frozen=True)
class FeatureSettings:
    kinds: tuple = tuple(k.name for k in ALL_KINDS)
    standardize: bool = True
    calibration_frames: int = 256

    def __post_init__(self):
        object.__setattr__(self, "kinds", tuple(FeatureKind.parse(k).name for k in self.kinds))
        if not self.kinds:
            raise ValueError("at least one feature kind is required")
        if self.calibration_frames < 1:
            raise ValueError("calibration_frames must be positive")


@dataclass(frozen=True)
class ModelSettings:
    filters: tuple = REFERENCE_FILTERS
    kernel_size: int = REFERENCE_KERNEL
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "filters", tuple(int(f) for f in self.filters))
        if len(self.filters) != 6 or min(self.filters) < 1:
            raise ValueError("filters must list six positive widths")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be a positive odd integer")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")


@dataclass(frozen=True)
class TrainSettings:
    learning_rate: float = 1e-3
    lr_decay: float = 0.1
    plateau_patience: int = 3
    batch_size: int = 32
    max_epochs: int = 60
    patience: int = 8
    train_frac: float = 0.70
    val_frac: float = 0.05
    test_frac: float = 0.25
    split_seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must lie in (0, 1]")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.max_epochs < 1 or self.patience < 1 or self.plateau_patience < 1:
            raise ValueError("epoch counts must be positive")
        fr = (self.train_frac, self.val_frac, self.test_frac)
        if min(fr) < 0 or abs(sum(fr) - 1) > 1e-9:
            raise ValueError("split fractions must be non-negative and sum to 1")


@dataclass(frozen=True)
class EvalSettings:
    snr_bin_width: float = 1.0

    def __post_init__(self):
        if self.snr_bin_width <= 0:
            raise ValueError("snr_bin_width must be positive")


@dataclass(frozen=True)
class RunConfig:
    dataset: GenerationConfig = field(default_factory=GenerationConfig)
    preprocess: PreprocessSettings = field(default_factory=PreprocessSettings)
    features: FeatureSettings = field(default_factory=FeatureSettings)
    model: ModelSettings = field(default_factory=ModelSettings)
    train: TrainSettings = field(default_factory=TrainSettings)
    eval: EvalSettings = field(default_factory=EvalSettings)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            section = asdict(getattr(self, f.name))
            out[f.name] = {k: list(v) if isinstance(v, tuple) else v for k, v in section.items()}
        return out

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def write_echo(self, directory) -> Path:
        path = Path(directory) / CONFIG_ECHO
        path.write_text(self.to_toml())
        return path


_SECTION_TYPES = {
    "dataset": GenerationConfig,
    "preprocess": PreprocessSettings,
    "features": FeatureSettings,
    "model": ModelSettings,
    "train": TrainSettings,
    "eval": EvalSettings,
}


def _build_section(name, cls, values):
    if not isinstance(values, dict):
        raise ConfigError(f"[{name}] must be a table")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")
    kw = {}
    for key, value in values.items():
        default = known[key].default
        if isinstance(default, tuple):
            if not isinstance(value, list):
                raise ConfigError(f"[{name}] {key} must be a list")
            value = tuple(value)
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"[{name}] {key} must be a boolean")
        elif isinstance(default, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"[{name}] {key} must be an integer")
        elif isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"[{name}] {key} must be a number")
            value = float(value)
        elif isinstance(default, str) and not isinstance(value, str):
            raise ConfigError(f"[{name}] {key} must be a string")
        kw[key] = value
    try:
        return cls(**kw)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    unknown = sorted(set(data) - set(_SECTION_TYPES))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    parts = {name: _build_section(name, cls, data.get(name, {})) for name, cls in _SECTION_TYPES.items()}
    return RunConfig(**parts)


def load_config(path) -> RunConfig:
    """Parse and validate a TOML run configuration."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)


def with_section(config: RunConfig, section: str, **kw) -> RunConfig:
    """Copy of ``config`` with keys of one section replaced."""
    return replace(config, **{section: replace(getattr(config, section), **kw)})
