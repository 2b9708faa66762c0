"""Versioned binary checkpoints for a fitted ``CAPClassifier``.

Layout: ``b"CYCK"``, format version (u32), JSON header length (u32), the
UTF-8 JSON header, then raw little-endian tensors at the offsets the header
lists. The header carries the topology, estimator parameters, feature
scales, RNG state and any caller-supplied metadata.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .frames import DataIOError
from .model import CAPClassifier, CapNetwork
from .features import CSPFeatureExtractor
from .nn import Adam

MAGIC = b"CYCK"
VERSION = 1


def _tensors(clf: CAPClassifier) -> dict[str, np.ndarray]:
    net = clf.network_
    out = {f"param/{k}": v for k, v in net.params.items()}
    out.update({f"buffer/{k}": v for k, v in net.buffers.items()})
    opt = getattr(clf, "optimizer_", None)
    if opt is not None:
        out.update({f"adam_m/{k}": v for k, v in opt.m.items()})
        out.update({f"adam_v/{k}": v for k, v in opt.v.items()})
    return out


def save_checkpoint(path, clf: CAPClassifier, metadata: dict | None = None) -> Path:
    tensors = _tensors(clf)
    index, offset = [], 0
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        index.append({"name": name, "dtype": arr.dtype.str.replace("=", "<"), "shape": list(arr.shape),
                      "offset": offset, "nbytes": arr.nbytes})
        offset += arr.nbytes
    opt = getattr(clf, "optimizer_", None)
    header = {
        "topology": clf.network_.topology(),
        "estimator": {k: (list(v) if isinstance(v, tuple) else v) for k, v in clf.get_params().items()},
        "classes": [int(c) for c in clf.classes_],
        "feature_scales": clf.extractor_.scales_,
        "rng_state": getattr(clf, "rng_state_", None),
        "optimizer": None if opt is None else {"t": opt.t, "lr": opt.lr},
        "best_epoch": getattr(clf, "best_epoch_", None),
        "history": getattr(clf, "history_", []),
        "metadata": metadata or {},
        "tensors": index,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC + struct.pack("<II", VERSION, len(blob)))
            fh.write(blob)
            for name, arr in tensors.items():
                fh.write(np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())
    except OSError as exc:
        raise DataIOError(f"cannot write checkpoint {path}: {exc}") from exc
    return path


def read_header(path) -> dict:
    return _read(path)[0]


def _read(path):
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataIOError(f"cannot read checkpoint {path}: {exc}") from exc
    if raw[:4] != MAGIC:
        raise DataIOError(f"{path} is not a checkpoint file")
    version, n = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise DataIOError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(raw[12:12 + n].decode())
    return header, memoryview(raw)[12 + n:]


def load_checkpoint(path) -> tuple[CAPClassifier, dict]:
    """Rebuild the fitted classifier; returns ``(classifier, metadata)``."""
    header, data = _read(path)
    tensors = {}
    for entry in header["tensors"]:
        buf = data[entry["offset"]:entry["offset"] + entry["nbytes"]]
        tensors[entry["name"]] = np.frombuffer(buf, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"]).copy()
    est = dict(header["estimator"])
    for key in ("kinds", "filters"):
        est[key] = tuple(est[key])
    clf = CAPClassifier(**est)
    clf.classes_ = np.asarray(header["classes"])
    net = CapNetwork.from_topology(header["topology"])
    strip = lambda prefix: {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}
    net.load_state(strip("param/"), strip("buffer/"))
    clf.network_ = net
    ext = CSPFeatureExtractor(est["kinds"], est["standardize"], est["calibration_frames"], np.dtype(est["dtype"]))
    ext.scales_ = header["feature_scales"]
    ext.frame_length_ = net.frame_length
    clf.extractor_ = ext
    clf.n_features_in_ = net.frame_length
    clf.history_ = header.get("history", [])
    clf.best_epoch_ = header.get("best_epoch")
    clf.rng_state_ = header.get("rng_state")
    if header.get("optimizer"):
        opt = Adam(header["optimizer"]["lr"])
        opt.t = header["optimizer"]["t"]
        opt.m, opt.v = strip("adam_m/"), strip("adam_v/")
        clf.optimizer_ = opt
    return clf, header.get("metadata", {})
