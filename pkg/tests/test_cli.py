import csv
import json

import pytest

from cspcap.cli import main

TOY = """
[dataset]
name = "toy"
frames_per_class = 8
frame_length = 256
t0_min = 2
t0_max = 4
snr_min_db = 15.0
snr_max_db = 20.0
snr_center_db = 17.0

[preprocess]
segment_length = 64
transition_bins = 4

[features]
calibration_frames = 8

[model]
filters = [2, 2, 2, 2, 2, 4]
kernel_size = 3

[train]
batch_size = 8
max_epochs = 1
"""


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "toy.toml"
    cfg.write_text(TOY)
    other = root / "other.toml"
    other.write_text(TOY.replace('name = "toy"', 'name = "other"\ncfo_low = 0.01\ncfo_high = 0.02'))
    assert main(["--threads", "1", "gen", "--config", str(cfg), "--out", str(root / "raw")]) == 0
    assert main(["preprocess", "--config", str(cfg), "--data", str(root / "raw"), "--out", str(root / "pre")]) == 0
    assert main(["train", "--config", str(cfg), "--data", str(root / "pre"), "--out", str(root / "run")]) == 0
    assert main(["gen", "--config", str(other), "--out", str(root / "rawB")]) == 0
    assert main(["preprocess", "--config", str(other), "--data", str(root / "rawB"), "--out", str(root / "preB")]) == 0
    return root


def test_gen_manifest_lists_all_frames(pipeline):
    manifest = json.loads((pipeline / "raw" / "manifest.json").read_text())
    assert manifest["frame_count"] == 8 * 8 == len(manifest["frames"])
    assert (pipeline / "raw" / "config.resolved.toml").exists()


def test_gen_is_idempotent(pipeline, tmp_path):
    assert main(["gen", "--config", str(pipeline / "toy.toml"), "--out", str(tmp_path)]) == 0
    for name in ("frames.bin", "manifest.json", "config.resolved.toml"):
        assert (tmp_path / name).read_bytes() == (pipeline / "raw" / name).read_bytes()


def test_preprocess_refuses_twice(pipeline, tmp_path):
    assert main(["preprocess", "--config", str(pipeline / "toy.toml"), "--data", str(pipeline / "pre"),
                 "--out", str(tmp_path)]) == 2


def test_eval_and_xeval(pipeline, tmp_path):
    ckpt = str(pipeline / "run" / "checkpoint.bin")
    assert main(["eval", "--ckpt", ckpt, "--data", str(pipeline / "pre"), "--out", str(tmp_path)]) == 0
    test = json.loads((tmp_path / "eval_test.json").read_text())
    ref = json.loads((pipeline / "run" / "test_report.json").read_text())
    assert test == ref
    assert main(["xeval", "--ckpt", ckpt, "--data", str(pipeline / "preB"), "--out", str(tmp_path)]) == 0
    x = json.loads((tmp_path / "xeval_report.json").read_text())
    assert set(x["per_scheme_delta"]) == set(x["class_names"])
    assert x["warnings"] == []


def test_features_and_lines(pipeline, tmp_path):
    out = tmp_path / "f.csv"
    assert main(["features", "--data", str(pipeline / "raw"), "--index", "3", "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0][:3] == ["sample", "TIME2_I", "TIME2_Q"]
    assert len(rows) == 257 and len(rows[0]) == 13
    lines = tmp_path / "l.csv"
    assert main(["lines", "--data", str(pipeline / "raw"), "--index", "0", "1", "--out", str(lines)]) == 0
    assert next(csv.reader(lines.open()))[0] == "frame"


def test_inspect_and_selftest(capsys):
    assert main(["inspect", "--frame-length", "1024"]) == 0
    assert "1,024 × 2" in capsys.readouterr().out
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 10 and "FAIL" not in out


def test_exit_codes(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[train]\nbogus = 1\n")
    assert main(["gen", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert main(["eval", "--ckpt", str(tmp_path / "none.bin"), "--data", str(tmp_path), "--out", str(tmp_path)]) == 3
    assert main(["--threads", "0", "selftest"]) == 2


def test_selftest_failure_exit_code(monkeypatch):
    import cspcap.cli as cli
    from cspcap.selftest import CheckResult
    monkeypatch.setattr(cli, "run_selftest", lambda: [CheckResult("broken", 1.0, 1e-6, 0.0)])
    assert main(["selftest"]) == 5


def test_numeric_failure_exit_code(monkeypatch, pipeline, tmp_path):
    import cspcap.cli as cli
    from cspcap.model import NumericError

    def boom(*a, **k):
        raise NumericError("non-finite training loss at epoch 1")

    monkeypatch.setattr(cli, "train", boom)
    assert main(["train", "--config", str(pipeline / "toy.toml"), "--data", str(pipeline / "pre"),
                 "--out", str(tmp_path)]) == 4
