"""Experimental protocol: stratified split, training, evaluation and cross-dataset testing."""

from __future__ import annotations

import csv
import io
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .frames import DataIOError, FrameDataset, write_json
from .model import CAPClassifier
from .synthesis import ModulationScheme

log = logging.getLogger(__name__)

CHECKPOINT_FILE = "checkpoint.bin"
TRAIN_LOG_FILE = "train_log.csv"
LOG_COLUMNS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc", "lr")

PSK_MSK = ("BPSK", "QPSK", "PSK8", "MSK")
QAM = ("QAM16", "QAM64", "QAM256")


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.70
    val_frac: float = 0.05
    test_frac: float = 0.25
    seed: int = 0

    def __post_init__(self):
        fr = (self.train_frac, self.val_frac, self.test_frac)
        if min(fr) < 0 or abs(sum(fr) - 1) > 1e-9:
            raise ValueError("split fractions must be non-negative and sum to 1")


def split_dataset(labels, spec: SplitSpec = SplitSpec()) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stratified train/val/test index arrays (each sorted).

    ``labels`` may be a label array or a ``FrameDataset``. Per class, the
    frames are permuted with ``spec.seed`` and cut at
    ``round(train_frac * n)`` and ``round((train_frac + val_frac) * n)``.
    """
    if isinstance(labels, FrameDataset):
        labels = labels.labels
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("cannot split an empty dataset")
    rng = np.random.default_rng(spec.seed)
    parts = ([], [], [])
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < 4:
            raise ValueError(f"class {cls} has {idx.size} frames; at least 4 are needed to split")
        idx = rng.permutation(idx)
        a = int(round(spec.train_frac * idx.size))
        b = int(round((spec.train_frac + spec.val_frac) * idx.size))
        for part, chunk in zip(parts, (idx[:a], idx[a:b], idx[b:])):
            part.append(chunk)
    return tuple(np.sort(np.concatenate(p)).astype(np.int64) for p in parts)


def _scheme_name(label) -> str:
    try:
        return ModulationScheme(int(label)).name
    except ValueError:
        return str(label)


@dataclass
class EvalReport:
    """Classification results on one set of frames.

    ``counts[i, j]`` is the number of frames of class ``class_names[i]``
    predicted as ``class_names[j]``. Rows of ``confusion`` are normalized; a
    class with no frames keeps an all-zero row.
    """

    class_names: list
    counts: np.ndarray
    snr_bins: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def p_cc(self) -> float:
        return float(np.trace(self.counts) / self.n)

    @property
    def confusion(self) -> np.ndarray:
        rows = self.counts.sum(axis=1, keepdims=True)
        return np.divide(self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)

    @property
    def per_scheme_accuracy(self) -> dict:
        rows = self.counts.sum(axis=1)
        return {name: (float(self.counts[i, i] / rows[i]) if rows[i] else None)
                for i, name in enumerate(self.class_names)}

    def subset_accuracy(self, names) -> float | None:
        """Accuracy over the frames whose true class is in ``names``."""
        rows = [i for i, c in enumerate(self.class_names) if c in set(names)]
        total = self.counts[rows].sum()
        return float(sum(self.counts[i, i] for i in rows) / total) if total else None

    def to_dict(self) -> dict:
        return {
            "p_cc": self.p_cc,
            "n": self.n,
            "class_names": list(self.class_names),
            "per_scheme_accuracy": self.per_scheme_accuracy,
            "counts": self.counts.tolist(),
            "confusion": self.confusion.tolist(),
            "snr_bins": self.snr_bins,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(list(d["class_names"]), np.asarray(d["counts"], dtype=np.int64), list(d.get("snr_bins", [])))

    def confusion_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true/predicted", *self.class_names])
        for name, row in zip(self.class_names, self.confusion):
            w.writerow([name, *(repr(float(v)) for v in row)])
        return buf.getvalue()

    def snr_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["snr_bin_low_db", "snr_bin_high_db", "count", "correct", "accuracy"])
        for b in self.snr_bins:
            w.writerow([repr(b["low_db"]), repr(b["high_db"]), b["count"], b["correct"], repr(b["accuracy"])])
        return buf.getvalue()

    def write(self, directory, prefix="report", extra: dict | None = None) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        body = self.to_dict()
        if extra:
            body.update(extra)
        write_json(directory / f"{prefix}.json", body)
        (directory / f"{prefix}_confusion.csv").write_text(self.confusion_csv())
        (directory / f"{prefix}_snr.csv").write_text(self.snr_csv())
        return directory


def report_from_predictions(y_true, y_pred, snr_db=None, classes=None, bin_width: float = 1.0) -> EvalReport:
    """Build an ``EvalReport`` from integer scheme labels and predictions."""
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    if y_true.size == 0:
        raise ValueError("cannot evaluate an empty split")
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred differ in length")
    classes = np.unique(np.concatenate([y_true, y_pred] + ([np.asarray(classes)] if classes is not None else [])))
    ti, pi = np.searchsorted(classes, y_true), np.searchsorted(classes, y_pred)
    counts = np.zeros((classes.size, classes.size), dtype=np.int64)
    np.add.at(counts, (ti, pi), 1)
    bins = []
    if snr_db is not None:
        snr_db = np.asarray(snr_db, dtype=float)
        if snr_db.shape != y_true.shape:
            raise ValueError("snr_db must have one entry per frame")
        key = np.floor(snr_db / bin_width).astype(np.int64)
        correct = ti == pi
        for k in np.unique(key):
            sel = key == k
            c = int(correct[sel].sum())
            bins.append({"low_db": float(k * bin_width), "high_db": float((k + 1) * bin_width),
                         "count": int(sel.sum()), "correct": c, "accuracy": c / int(sel.sum())})
    return EvalReport([_scheme_name(c) for c in classes], counts, bins)


def make_classifier(config: RunConfig, verbose: int = 0) -> CAPClassifier:
    t, f, m = config.train, config.features, config.model
    return CAPClassifier(kinds=f.kinds, filters=m.filters, kernel_size=m.kernel_size,
                         learning_rate=t.learning_rate, lr_decay=t.lr_decay,
                         plateau_patience=t.plateau_patience, batch_size=t.batch_size,
                         max_epochs=t.max_epochs, patience=t.patience, standardize=f.standardize,
                         calibration_frames=f.calibration_frames, random_state=m.seed, dtype=m.dtype,
                         verbose=verbose)


def log_csv(history) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_COLUMNS)
    for row in history:
        w.writerow([repr(row[c]) if isinstance(row.get(c), float) else row.get(c, "") for c in LOG_COLUMNS])
    return buf.getvalue()


@dataclass
class TrainResult:
    classifier: CAPClassifier
    split: tuple
    test_report: EvalReport
    history: list


def train(dataset: FrameDataset, config: RunConfig, out_dir=None, verbose: int = 0,
          epoch_callback=None) -> TrainResult:
    """Split, fit with validation-based selection, then test on the held-out part.

    With ``out_dir`` the checkpoint, the per-epoch log, the test report and
    the resolved config are written there. The checkpoint metadata carries
    the within-dataset test report, which ``cross_evaluate`` uses as its
    reference.
    """
    if not dataset.preprocessed:
        warnings.warn("training on frames that were not preprocessed", stacklevel=2)
    t = config.train
    split = split_dataset(dataset.labels, SplitSpec(t.train_frac, t.val_frac, t.test_frac, t.split_seed))
    tr, va, te = split
    y = dataset.labels
    clf = make_classifier(config, verbose)
    clf.fit(dataset.iq[tr], y[tr], dataset.iq[va], y[va], epoch_callback=epoch_callback)
    report = evaluate(clf, dataset, te, config.eval.snr_bin_width)
    result = TrainResult(clf, split, report, clf.history_)
    if out_dir is not None:
        out = Path(out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            config.write_echo(out)
            (out / TRAIN_LOG_FILE).write_text(log_csv(clf.history_))
        except OSError as exc:
            raise DataIOError(f"cannot write to {out}: {exc}") from exc
        meta = {"config": config.to_dict(), "dataset_config": dataset.config,
                "split_sizes": [int(s.size) for s in split], "test_report": report.to_dict()}
        save_checkpoint(out / CHECKPOINT_FILE, clf, meta)
        report.write(out, "test_report")
    return result


def _as_classifier(model):
    if isinstance(model, CAPClassifier):
        return model, {}
    return load_checkpoint(model)


def evaluate(model, dataset: FrameDataset, index=None, bin_width: float = 1.0) -> EvalReport:
    """Evaluate a classifier (or checkpoint path) on ``dataset[index]`` (all frames by default)."""
    clf, _ = _as_classifier(model)
    if dataset.frame_length != clf.n_features_in_:
        raise ValueError(f"model expects frames of length {clf.n_features_in_}, "
                         f"dataset has {dataset.frame_length}")
    index = np.arange(len(dataset)) if index is None else np.asarray(index)
    if index.size == 0:
        raise ValueError("cannot evaluate an empty split")
    y_pred = clf.predict(dataset.iq[index])
    return report_from_predictions(dataset.labels[index], y_pred, dataset.snr_db[index], clf.classes_, bin_width)


@dataclass
class CrossReport:
    report: EvalReport
    reference: EvalReport | None
    warnings: list = field(default_factory=list)

    @property
    def delta(self) -> float | None:
        return None if self.reference is None else self.report.p_cc - self.reference.p_cc

    @property
    def per_scheme_delta(self) -> dict:
        if self.reference is None:
            return {}
        ref = self.reference.per_scheme_accuracy
        out = {}
        for name, acc in self.report.per_scheme_accuracy.items():
            r = ref.get(name)
            out[name] = None if acc is None or r is None else acc - r
        return out

    def subset_drop(self, names) -> float | None:
        """Within-reference accuracy minus cross accuracy over ``names``."""
        if self.reference is None:
            return None
        a, b = self.reference.subset_accuracy(names), self.report.subset_accuracy(names)
        return None if a is None or b is None else a - b

    def to_dict(self) -> dict:
        return {
            "cross": self.report.to_dict(),
            "reference": None if self.reference is None else self.reference.to_dict(),
            "delta_p_cc": self.delta,
            "per_scheme_delta": self.per_scheme_delta,
            "subset_drop": {"psk_msk": self.subset_drop(PSK_MSK), "qam": self.subset_drop(QAM)},
            "warnings": self.warnings,
        }

    def write(self, directory) -> Path:
        directory = Path(directory)
        self.report.write(directory, "xeval_report", {k: v for k, v in self.to_dict().items() if k != "cross"})
        return directory


def _cfo_range(cfg: dict):
    if not cfg or "cfo_low" not in cfg:
        return None
    return float(cfg["cfo_low"]), float(cfg["cfo_high"])


def cross_evaluate(model, dataset_b: FrameDataset, reference: EvalReport | None = None,
                   config_a: dict | None = None, bin_width: float = 1.0) -> CrossReport:
    """Test a model trained on one configuration against all frames of another.

    ``reference`` defaults to the within-dataset test report stored in the
    checkpoint; ``config_a`` to the training dataset config stored there.
    """
    clf, meta = _as_classifier(model)
    if reference is None and "test_report" in meta:
        reference = EvalReport.from_dict(meta["test_report"])
    if config_a is None:
        config_a = meta.get("dataset_config")
    notes = []
    ra, rb = _cfo_range(config_a), _cfo_range(dataset_b.config)
    if ra is not None and ra == rb:
        msg = "training and test datasets share the same CFO range; this is a weak generalization test"
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)
    report = evaluate(clf, dataset_b, None, bin_width)
    return CrossReport(report, reference, notes)
