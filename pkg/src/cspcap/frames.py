"""Binary frame files, JSON manifests and the in-memory dataset container.

File layout (little-endian)::

    "CYCF" | version u32 | frame_length u32 | frame_count u32
    per frame: 32-byte metadata record, then frame_length (I, Q) float32 pairs

The metadata record is ``scheme u8, T0 u16, beta f32, f0 f64, snr_db f32,
seed u64`` followed by 5 padding bytes. Bit 31 of the version word flags a
file of preprocessed frames.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .synthesis import FrameSpec, GenerationConfig, ModulationScheme, synthesize_frame

MAGIC = b"CYCF"
FORMAT_VERSION = 1
PREPROCESSED_FLAG = 1 << 31
HEADER_DTYPE = np.dtype([("magic", "S4"), ("version", "<u4"), ("frame_length", "<u4"), ("frame_count", "<u4")])
RECORD_DTYPE = np.dtype([("scheme", "u1"), ("T0", "<u2"), ("beta", "<f4"), ("f0", "<f8"),
                         ("snr_db", "<f4"), ("seed", "<u8"), ("pad", "V5")])
assert RECORD_DTYPE.itemsize == 32

FRAMES_FILE = "frames.bin"
MANIFEST_FILE = "manifest.json"


class DataIOError(OSError):
    """Raised when a frame file or manifest is missing, truncated or malformed."""


def _frame_dtype(length: int) -> np.dtype:
    return np.dtype([("meta", RECORD_DTYPE), ("iq", "<f4", (length, 2))])


def frame_offsets(frame_length: int, frame_count: int) -> list[int]:
    size = _frame_dtype(frame_length).itemsize
    return [HEADER_DTYPE.itemsize + k * size for k in range(frame_count)]


def spec_records(specs) -> np.ndarray:
    rec = np.zeros(len(specs), RECORD_DTYPE)
    for k, s in enumerate(specs):
        rec[k] = (int(s.scheme), s.T0, np.nan if s.beta is None else s.beta, s.f0, s.snr_db, s.seed, b"")
    return rec


def record_to_spec(rec, length: int) -> FrameSpec:
    scheme = ModulationScheme(int(rec["scheme"]))
    beta = None if np.isnan(rec["beta"]) else float(rec["beta"])
    return FrameSpec(scheme, int(rec["T0"]), beta, float(rec["f0"]), float(rec["snr_db"]), length, int(rec["seed"]))


def write_frames(path, records: np.ndarray, iq: np.ndarray, preprocessed: bool = False) -> None:
    """Write ``iq`` of shape ``(n, L, 2)`` with one metadata record per frame."""
    iq = np.asarray(iq, dtype="<f4")
    n, length, _ = iq.shape
    header = np.zeros(1, HEADER_DTYPE)
    header[0] = (MAGIC, FORMAT_VERSION | (PREPROCESSED_FLAG if preprocessed else 0), length, n)
    body = np.empty(n, _frame_dtype(length))
    body["meta"] = records
    body["iq"] = iq
    tmp = Path(str(path) + ".tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(header.tobytes())
            fh.write(body.tobytes())
        os.replace(tmp, path)
    except OSError as exc:
        raise DataIOError(f"cannot write {path}: {exc}") from exc


def read_frames(path, mmap: bool = False):
    """Return ``(records, iq, preprocessed)`` from a frame file."""
    path = Path(path)
    try:
        header = np.fromfile(path, HEADER_DTYPE, count=1)
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc
    if header.size != 1 or header["magic"][0] != MAGIC:
        raise DataIOError(f"{path} is not a frame file")
    version = int(header["version"][0])
    if version & ~PREPROCESSED_FLAG != FORMAT_VERSION:
        raise DataIOError(f"{path}: unsupported format version {version & 0xFFFF}")
    length, count = int(header["frame_length"][0]), int(header["frame_count"][0])
    dt = _frame_dtype(length)
    expected = HEADER_DTYPE.itemsize + count * dt.itemsize
    if path.stat().st_size != expected:
        raise DataIOError(f"{path}: expected {expected} bytes, found {path.stat().st_size}")
    if mmap:
        body = np.memmap(path, dt, mode="r", offset=HEADER_DTYPE.itemsize, shape=(count,))
    else:
        body = np.fromfile(path, dt, count=count, offset=HEADER_DTYPE.itemsize)
    return body["meta"], body["iq"], bool(version & PREPROCESSED_FLAG)


@dataclass
class FrameDataset:
    """Frames as float32 ``(n, L, 2)`` I/Q pairs plus per-frame metadata."""

    iq: np.ndarray
    records: np.ndarray
    config: dict = field(default_factory=dict)
    preprocessed: bool = False
    extras: list = field(default_factory=list)

    def __len__(self):
        return self.iq.shape[0]

    @property
    def frame_length(self) -> int:
        return self.iq.shape[1]

    @property
    def labels(self) -> np.ndarray:
        return self.records["scheme"].astype(np.int64)

    @property
    def snr_db(self) -> np.ndarray:
        return self.records["snr_db"].astype(float)

    def subset(self, index) -> "FrameDataset":
        index = np.asarray(index)
        extras = [self.extras[k] for k in index] if self.extras else []
        return FrameDataset(self.iq[index], self.records[index], self.config, self.preprocessed, extras)

    def specs(self) -> list[FrameSpec]:
        return [record_to_spec(r, self.frame_length) for r in self.records]

    def manifest(self) -> dict:
        offsets = frame_offsets(self.frame_length, len(self))
        frames = []
        for k, rec in enumerate(self.records):
            entry = {
                "index": k,
                "scheme": ModulationScheme(int(rec["scheme"])).name,
                "T0": int(rec["T0"]),
                "beta": None if np.isnan(rec["beta"]) else float(rec["beta"]),
                "f0": float(rec["f0"]),
                "snr_db": float(rec["snr_db"]),
                "seed": int(rec["seed"]),
                "offset": offsets[k],
            }
            if self.extras:
                entry.update(self.extras[k])
            frames.append(entry)
        return {
            "format": "CYCF",
            "version": FORMAT_VERSION,
            "frames_file": FRAMES_FILE,
            "frame_length": self.frame_length,
            "frame_count": len(self),
            "preprocessed": self.preprocessed,
            "config": self.config,
            "frames": frames,
        }

    def save(self, directory) -> Path:
        directory = Path(directory)
        try:
            directory.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise DataIOError(f"cannot create {directory}: {exc}") from exc
        write_frames(directory / FRAMES_FILE, self.records, self.iq, self.preprocessed)
        write_json(directory / MANIFEST_FILE, self.manifest())
        return directory

    @classmethod
    def load(cls, directory, mmap: bool = False) -> "FrameDataset":
        directory = Path(directory)
        manifest = read_json(directory / MANIFEST_FILE)
        records, iq, pre = read_frames(directory / manifest.get("frames_file", FRAMES_FILE), mmap=mmap)
        if len(manifest.get("frames", [])) != records.shape[0]:
            raise DataIOError(f"{directory}: manifest and frame file disagree on frame count")
        known = {"index", "scheme", "T0", "beta", "f0", "snr_db", "seed", "offset"}
        extras = [{k: v for k, v in f.items() if k not in known} for f in manifest["frames"]]
        if not any(extras):
            extras = []
        return cls(iq, records, manifest.get("config", {}), pre, extras)


def write_json(path, obj) -> None:
    try:
        Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")
    except OSError as exc:
        raise DataIOError(f"cannot write {path}: {exc}") from exc


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise DataIOError(f"missing file {path}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc


def generate_dataset(config: GenerationConfig, out_dir=None) -> FrameDataset:
    """Synthesize every frame described by ``config``; write it if ``out_dir`` is given."""
    specs = config.frame_specs()
    iq = np.empty((len(specs), config.frame_length, 2), dtype=np.float32)
    for k, spec in enumerate(specs):
        frame = synthesize_frame(spec)
        iq[k, :, 0] = frame.i
        iq[k, :, 1] = frame.q
    cfg = asdict(config)
    cfg["schemes"] = list(config.schemes)
    cfg["snr_distribution"] = {"family": "scaled_beta", "shape": list(config.snr_beta_shape())}
    cfg["msk_beta"] = None
    ds = FrameDataset(iq, spec_records(specs), cfg)
    if out_dir is not None:
        ds.save(out_dir)
    return ds
