import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cspcap.config import config_from_dict
from cspcap.frames import generate_dataset
from cspcap.preprocessing import preprocess_dataset
from cspcap.training import (PSK_MSK, QAM, CrossReport, EvalReport, SplitSpec, cross_evaluate, evaluate,
                             report_from_predictions, split_dataset, train)


def test_reference_split_sizes():
    labels = np.repeat(np.arange(8), 1000)
    tr, va, te = split_dataset(labels, SplitSpec(seed=1))
    assert (tr.size, va.size, te.size) == (5600, 400, 2000)
    for c in range(8):
        assert [int(np.sum(labels[p] == c)) for p in (tr, va, te)] == [700, 50, 250]


@given(st.lists(st.integers(4, 60), min_size=1, max_size=6), st.integers(0, 10**6))
def test_split_is_a_stratified_partition(sizes, seed):
    labels = np.concatenate([np.full(n, c) for c, n in enumerate(sizes)])
    spec = SplitSpec(seed=seed)
    parts = split_dataset(labels, spec)
    joined = np.concatenate(parts)
    assert np.array_equal(np.sort(joined), np.arange(labels.size))
    for c, n in enumerate(sizes):
        assert int(np.sum(labels[parts[0]] == c)) == round(0.7 * n)
    again = split_dataset(labels, spec)
    assert all(np.array_equal(a, b) for a, b in zip(parts, again))


def test_split_errors():
    with pytest.raises(ValueError):
        split_dataset(np.array([0, 0, 0, 1, 1, 1, 1]))
    with pytest.raises(ValueError):
        split_dataset(np.array([], int))
    with pytest.raises(ValueError):
        SplitSpec(0.5, 0.2, 0.2)


def test_perfect_predictor_report():
    y = np.repeat(np.arange(8), 5)
    r = report_from_predictions(y, y, np.linspace(0, 12, y.size))
    assert r.p_cc == 1.0
    np.testing.assert_array_equal(r.confusion, np.eye(8))


def test_random_predictor_near_chance():
    rng = np.random.default_rng(0)
    y = np.repeat(np.arange(8), 250)
    r = report_from_predictions(y, rng.integers(0, 8, y.size))
    assert r.p_cc == pytest.approx(0.125, abs=0.02)


@given(st.integers(0, 10**6), st.floats(0.25, 3.0))
def test_report_internal_consistency(seed, width):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 8, 200)
    pred = np.where(rng.random(200) < 0.6, y, rng.integers(0, 8, 200))
    snr = rng.uniform(-2, 18, 200)
    r = report_from_predictions(y, pred, snr, bin_width=width)
    present = r.counts.sum(axis=1) > 0
    np.testing.assert_allclose(r.confusion[present].sum(axis=1), 1, atol=1e-6)
    assert r.p_cc == np.trace(r.counts) / r.counts.sum() == np.mean(y == pred)
    assert sum(b["count"] for b in r.snr_bins) == 200
    weighted = sum(b["accuracy"] * b["count"] for b in r.snr_bins) / 200
    assert weighted == pytest.approx(r.p_cc, abs=1e-9)
    assert EvalReport.from_dict(json.loads(json.dumps(r.to_dict()))).to_dict() == r.to_dict()


def test_subset_drops():
    names = ["BPSK", "QPSK", "QAM16"]
    ref = EvalReport(names, np.diag([10, 10, 10]))
    cross = EvalReport(names, np.array([[10, 0, 0], [1, 9, 0], [0, 5, 5]]))
    xr = CrossReport(cross, ref)
    assert xr.subset_drop(["BPSK", "QPSK"]) == pytest.approx(0.05)
    assert xr.subset_drop(["QAM16"]) == pytest.approx(0.5)
    assert xr.per_scheme_delta["QAM16"] == pytest.approx(-0.5)


def test_empty_split_rejected():
    with pytest.raises(ValueError):
        report_from_predictions(np.array([], int), np.array([], int))


TINY = {
    "dataset": {"frames_per_class": 8, "frame_length": 256, "t0_min": 2, "t0_max": 4, "schemes": ["BPSK", "QPSK"],
                "snr_min_db": 15.0, "snr_max_db": 20.0, "snr_center_db": 17.0, "master_seed": 2},
    "preprocess": {"segment_length": 64, "transition_bins": 4},
    "features": {"calibration_frames": 8},
    "model": {"filters": [2, 2, 2, 2, 2, 4], "kernel_size": 3},
    "train": {"batch_size": 4, "max_epochs": 2, "train_frac": 0.5, "val_frac": 0.25, "test_frac": 0.25},
}


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    cfg = config_from_dict(TINY)
    ds = preprocess_dataset(generate_dataset(cfg.dataset), **cfg.preprocess.params())
    out = tmp_path_factory.mktemp("run")
    return cfg, ds, out, train(ds, cfg, out)


def test_train_writes_artifacts(tiny_run):
    cfg, ds, out, result = tiny_run
    for name in ("checkpoint.bin", "train_log.csv", "test_report.json", "test_report_confusion.csv",
                 "test_report_snr.csv", "config.resolved.toml"):
        assert (out / name).exists(), name
    log = (out / "train_log.csv").read_text().splitlines()
    assert log[0] == "epoch,train_loss,train_acc,val_loss,val_acc,lr"
    assert len(log) == 1 + len(result.history)
    assert result.test_report.n == 4


def test_training_is_deterministic(tiny_run, tmp_path):
    cfg, ds, out, _ = tiny_run
    train(ds, cfg, tmp_path)
    for name in ("checkpoint.bin", "train_log.csv", "test_report.json"):
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes(), name


def test_evaluate_from_checkpoint_matches(tiny_run):
    cfg, ds, out, result = tiny_run
    r = evaluate(out / "checkpoint.bin", ds, result.split[2])
    assert r.to_dict() == result.test_report.to_dict()


def test_cross_evaluate_warns_on_same_cfo_range(tiny_run):
    cfg, ds, out, result = tiny_run
    with pytest.warns(UserWarning, match="CFO"):
        xr = cross_evaluate(out / "checkpoint.bin", ds)
    assert xr.reference is not None and xr.delta is not None
    assert set(xr.to_dict()["subset_drop"]) == {"psk_msk", "qam"}


def test_evaluate_rejects_length_mismatch(tiny_run):
    cfg, ds, out, result = tiny_run
    other = generate_dataset(cfg.dataset.with_overrides(frame_length=512, frames_per_class=1))
    with pytest.raises(ValueError):
        evaluate(result.classifier, other)


def test_subset_names():
    assert set(PSK_MSK) == {"BPSK", "QPSK", "PSK8", "MSK"}
    assert set(QAM) == {"QAM16", "QAM64", "QAM256"}
