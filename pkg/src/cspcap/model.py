"""Eight-branch CAP network and its scikit-learn style classifier wrapper.

Each branch consumes one feature kind and runs five conv/BN/ReLU/max-pool
stages, one conv/BN/ReLU/global-average stage and a dense layer to the class
count. Branch outputs are concatenated and mixed by a final dense layer.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_complex_frames, check_labels, is_power_of_two
from .features import ALL_KINDS, CSPFeatureExtractor, FeatureKind
from .nn import (Adam, BatchNorm, Conv1D, Dense, GlobalAvgPool1D, MaxPool1D, ReLU, Sequential,
                 softmax, softmax_xent)

log = logging.getLogger(__name__)

REFERENCE_FILTERS = (16, 24, 32, 48, 64, 96)
REFERENCE_KERNEL = 23
N_HALVINGS = 5


class NumericError(FloatingPointError):
    """Training produced a non-finite loss or parameter."""


@dataclass(frozen=True)
class BranchConfig:
    feature_kind: str
    input_channels: int
    filters: tuple = REFERENCE_FILTERS
    kernel_size: int = REFERENCE_KERNEL
    classes: int = 8

    def __post_init__(self):
        object.__setattr__(self, "filters", tuple(int(f) for f in self.filters))
        if len(self.filters) != N_HALVINGS + 1:
            raise ValueError(f"a branch needs {N_HALVINGS + 1} filter counts, got {len(self.filters)}")


def _build_branch(cfg: BranchConfig, rng, dtype) -> Sequential:
    layers = []
    c_in = cfg.input_channels
    for stage, f in enumerate(cfg.filters):
        layers += [Conv1D(c_in, f, cfg.kernel_size, rng, dtype, input_grad=stage > 0),
                   BatchNorm(f, dtype=dtype), ReLU()]
        layers.append(MaxPool1D(2) if stage < N_HALVINGS else GlobalAvgPool1D())
        c_in = f
    layers.append(Dense(c_in, cfg.classes, rng, dtype))
    return Sequential(layers)


class CapNetwork:
    """Branches keyed by feature kind plus the concatenation head."""

    def __init__(self, frame_length, branch_configs, classes=8, seed=0, dtype=np.float32):
        self.frame_length = int(frame_length)
        self.classes = int(classes)
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        self.branch_configs = [c if isinstance(c, BranchConfig) else BranchConfig(**c) for c in branch_configs]
        rng = np.random.default_rng(self.seed)
        self.branches = {FeatureKind.parse(c.feature_kind): _build_branch(c, rng, self.dtype)
                         for c in self.branch_configs}
        self.head = Dense(len(self.branches) * self.classes, self.classes, rng, self.dtype)

    @property
    def kinds(self):
        return list(self.branches)

    def modules(self):
        for kind, branch in self.branches.items():
            for name, layer in branch.named_layers(f"{kind.name}."):
                yield name, layer
        yield "head", self.head

    def _collect(self, attr):
        out = {}
        for name, layer in self.modules():
            for k, v in getattr(layer, attr).items():
                out[f"{name}.{k}"] = v
        return out

    @property
    def params(self) -> dict[str, np.ndarray]:
        return self._collect("params")

    @property
    def grads(self) -> dict[str, np.ndarray]:
        return self._collect("grads")

    @property
    def buffers(self) -> dict[str, np.ndarray]:
        return self._collect("buffers")

    def load_state(self, params: dict, buffers: dict | None = None):
        for name, layer in self.modules():
            for k in layer.params:
                layer.params[k][...] = params[f"{name}.{k}"]
            for k in layer.buffers:
                if buffers is not None:
                    layer.buffers[k] = np.array(buffers[f"{name}.{k}"], dtype=self.dtype)

    def forward(self, features: dict, training=False) -> np.ndarray:
        """Logits ``(batch, classes)`` from a dict of feature batches."""
        outs = []
        for kind, branch in self.branches.items():
            if kind not in features:
                raise KeyError(f"no {kind.name} features for the {kind.name} branch")
            x = np.asarray(features[kind], dtype=self.dtype)
            if x.shape[1:] != (self.frame_length, kind.channels):
                raise ValueError(f"{kind.name} features have shape {x.shape[1:]}, "
                                 f"expected {(self.frame_length, kind.channels)}")
            outs.append(branch.forward(x, training))
        self._concat = np.concatenate(outs, axis=1)
        return self.head.forward(self._concat, training)

    def backward(self, dlogits):
        dconcat = self.head.backward(dlogits)
        for j, branch in enumerate(self.branches.values()):
            branch.backward(np.ascontiguousarray(dconcat[:, j * self.classes:(j + 1) * self.classes]))

    def clear(self):
        for branch in self.branches.values():
            branch.clear()
        self.head.clear()
        self._concat = None

    def predict_proba(self, features: dict) -> np.ndarray:
        return softmax(self.forward(features, training=False).astype(np.float64))

    def topology(self) -> dict:
        return {
            "frame_length": self.frame_length,
            "classes": self.classes,
            "seed": self.seed,
            "dtype": self.dtype.name,
            "branches": [dict(asdict(c), filters=list(c.filters)) for c in self.branch_configs],
        }

    @classmethod
    def from_topology(cls, topo: dict, dtype=None) -> "CapNetwork":
        return cls(topo["frame_length"], topo["branches"], topo["classes"], topo["seed"],
                   dtype or topo.get("dtype", "float32"))

    def activation_shapes(self) -> dict[FeatureKind, list[tuple[str, tuple]]]:
        """Per-branch ``(stage label, activation shape)`` chain, batch axis dropped."""
        chains = {}
        for kind, branch in self.branches.items():
            shape = (self.frame_length, kind.channels)
            chain = [("Input", shape)]
            layers = branch.layers
            for s in range(N_HALVINGS + 1):
                for layer in layers[4 * s:4 * s + 4]:
                    shape = layer.output_shape(shape)
                chain.append(("ConvMaxPool" if s < N_HALVINGS else "ConvAvgPool", shape))
            chain.append(("FC", layers[-1].output_shape(shape)))
            chains[kind] = chain
        return chains


def build_cap(frame_length=32768, classes=8, kinds=ALL_KINDS, filters=REFERENCE_FILTERS,
              kernel_size=REFERENCE_KERNEL, seed=0, dtype=np.float32) -> CapNetwork:
    if not is_power_of_two(frame_length) or frame_length < 64:
        raise ValueError(f"frame length must be a power of two >= 64, got {frame_length}")
    configs = []
    for k in kinds:
        kind = FeatureKind.parse(k)
        configs.append(BranchConfig(kind.name, kind.channels, tuple(filters), kernel_size, classes))
    return CapNetwork(frame_length, configs, classes, seed, dtype)


def parameter_count(net: CapNetwork) -> dict:
    branches = {}
    for kind, branch in net.branches.items():
        branches[kind.name] = sum(p.size for layer in branch.layers for p in layer.params.values())
    head = sum(p.size for p in net.head.params.values())
    return {"total": sum(branches.values()) + head, "branches": branches, "head": head}


def _fmt_shape(shape, symbolic_channels=None):
    parts = [f"{d:,}" for d in shape]
    if symbolic_channels is not None:
        parts[-1] = symbolic_channels
    return " × ".join(parts)


def layer_table(net: CapNetwork) -> str:
    """Plain-text per-branch layer table: filters, kernel and activation shapes."""
    lines = []
    chains = net.activation_shapes()
    seen = set()
    for kind, chain in chains.items():
        cfg = next(c for c in net.branch_configs if c.feature_kind == kind.name)
        key = cfg.input_channels
        if key in seen:
            continue
        seen.add(key)
        branch_names = ", ".join(k.name for k in chains if k.channels == key)
        lines.append(f"Branches: {branch_names} (Y = {key})")
        lines.append(f"{'Layer':<12}  {'(# Filters)[Filter Size]':<26}  Activations")
        c_in = key
        for j, (label, shape) in enumerate(chain):
            if label.startswith("Conv"):
                f = cfg.filters[j - 1]
                filt = f"({f})[{cfg.kernel_size} × {c_in}]"
                c_in = f
            else:
                filt = ""
            lines.append(f"{label:<12}  {filt:<26}  {_fmt_shape(shape)}")
        lines.append("")
    counts = parameter_count(net)
    lines.append(f"Concat: {len(net.branches)} × {net.classes} = {len(net.branches) * net.classes}")
    lines.append(f"Final FC: {len(net.branches) * net.classes} -> {net.classes}")
    lines.append(f"Parameters: {counts['total']:,} (head {counts['head']:,})")
    return "\n".join(lines) + "\n"


class CAPClassifier(ClassifierMixin, BaseEstimator):
    """Feature extraction plus the CAP network, trained with Adam.

    ``X`` holds preprocessed frames, either ``(n, L, 2)`` real I/Q pairs or
    ``(n, L)`` complex samples. Pass ``X_val``/``y_val`` to ``fit`` to enable
    best-checkpoint selection, learning-rate decay and early stopping.
    """

    def __init__(self, kinds=tuple(k.name for k in ALL_KINDS), filters=REFERENCE_FILTERS,
                 kernel_size=REFERENCE_KERNEL, learning_rate=1e-3, lr_decay=0.1, plateau_patience=3,
                 batch_size=32, max_epochs=60, patience=8, standardize=True, calibration_frames=256,
                 random_state=0, dtype="float32", verbose=0):
        self.kinds = kinds
        self.filters = filters
        self.kernel_size = kernel_size
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.plateau_patience = plateau_patience
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.standardize = standardize
        self.calibration_frames = calibration_frames
        self.random_state = random_state
        self.dtype = dtype
        self.verbose = verbose

    def _features(self, Z):
        return self.extractor_.transform(Z)

    def _batches(self, n, rng=None):
        order = np.arange(n) if rng is None else rng.permutation(n)
        n_batches = max(1, -(-n // self.batch_size))
        return np.array_split(order, n_batches)

    def _loss_acc(self, Z, y):
        total_loss, correct = 0.0, 0
        for idx in self._batches(len(y)):
            logits = self.network_.forward(self._features(Z[idx]), training=False).astype(np.float64)
            loss, _ = softmax_xent(logits, y[idx])
            total_loss += loss * idx.size
            correct += int(np.sum(logits.argmax(axis=1) == y[idx]))
        return total_loss / len(y), correct / len(y)

    def initialize(self, X, classes):
        """Build the extractor and an untrained network for frames like ``X``."""
        Z = as_complex_frames(X)
        self.classes_ = np.asarray(classes)
        self.extractor_ = CSPFeatureExtractor(self.kinds, self.standardize, self.calibration_frames,
                                              np.dtype(self.dtype)).fit(Z)
        self.network_ = build_cap(Z.shape[1], len(self.classes_), self.kinds, self.filters,
                                  self.kernel_size, self.random_state, self.dtype)
        self.n_features_in_ = Z.shape[1]
        return self

    def fit(self, X, y, X_val=None, y_val=None, epoch_callback=None):
        Z = as_complex_frames(X, np.complex64)
        y = check_labels(y, Z.shape[0])
        if Z.shape[0] < 2:
            raise ValueError("need at least two training frames")
        classes, y_enc = np.unique(y, return_inverse=True)
        self.initialize(Z, classes)
        has_val = X_val is not None and y_val is not None and len(y_val) > 0
        if has_val:
            Zv = as_complex_frames(X_val, np.complex64)
            yv = np.searchsorted(self.classes_, check_labels(y_val, Zv.shape[0]))
        rng = np.random.default_rng(self.random_state)
        opt = Adam(self.learning_rate)
        self.history_ = []
        best = None
        best_key = None
        since_best = 0
        since_loss_improved = 0
        best_val_loss = np.inf
        for epoch in range(1, self.max_epochs + 1):
            run_loss, run_correct = 0.0, 0
            for idx in self._batches(len(y_enc), rng):
                feats = self._features(Z[idx])
                logits = self.network_.forward(feats, training=True)
                loss, dlogits = softmax_xent(logits.astype(np.float64), y_enc[idx])
                if not np.isfinite(loss):
                    raise NumericError(f"non-finite training loss at epoch {epoch}")
                self.network_.backward(dlogits.astype(self.network_.dtype))
                opt.step(self.network_.params, self.network_.grads)
                run_loss += loss * idx.size
                run_correct += int(np.sum(logits.argmax(axis=1) == y_enc[idx]))
            self.network_.clear()
            if not all(np.all(np.isfinite(p)) for p in self.network_.params.values()):
                raise NumericError(f"non-finite parameters after epoch {epoch}")
            row = {"epoch": epoch, "train_loss": run_loss / len(y_enc), "train_acc": run_correct / len(y_enc),
                   "lr": opt.lr}
            if has_val:
                row["val_loss"], row["val_acc"] = self._loss_acc(Zv, yv)
                key = (row["val_acc"], -row["val_loss"])
            else:
                key = (row["train_acc"], -row["train_loss"])
            self.history_.append(row)
            if self.verbose:
                log.info("epoch %d %s", epoch, {k: round(v, 5) for k, v in row.items()})
            if epoch_callback is not None:
                epoch_callback(row)
            if best_key is None or key > best_key:
                best_key, since_best = key, 0
                best = (copy.deepcopy(self.network_.params), copy.deepcopy(self.network_.buffers), epoch)
            else:
                since_best += 1
            monitored = row.get("val_loss", row["train_loss"])
            if monitored < best_val_loss:
                best_val_loss, since_loss_improved = monitored, 0
            else:
                since_loss_improved += 1
                if since_loss_improved >= self.plateau_patience:
                    opt.lr *= self.lr_decay
                    since_loss_improved = 0
            if since_best >= self.patience:
                break
        self.network_.load_state(best[0], best[1])
        self.best_epoch_ = best[2]
        self.optimizer_ = opt
        self.rng_state_ = rng.bit_generator.state
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "network_")
        Z = as_complex_frames(X)
        out = np.empty((Z.shape[0], len(self.classes_)))
        for idx in self._batches(Z.shape[0]):
            out[idx] = self.network_.predict_proba(self._features(Z[idx]))
        return out

    def predict(self, X):
        return self.classes_[self.predict_proba(X).argmax(axis=1)]
