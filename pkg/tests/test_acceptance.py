"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are printed together at the end of the pytest run.
"""

import filecmp
import time
from pathlib import Path

import numpy as np
import pytest

from cspcap import cli
from cspcap.cf import detect_spectral_lines, wrap_frequency
from cspcap.config import load_config, with_section
from cspcap.features import FeatureKind, extract_features
from cspcap.frames import generate_dataset
from cspcap.model import build_cap, layer_table
from cspcap.preprocessing import normalize_utp, preprocess_dataset, preprocess_frame
from cspcap.selftest import check_dft, check_gradients, check_layer_oracle
from cspcap.synthesis import ALL_SCHEMES, FrameSpec, synthesize_frame
from cspcap.training import PSK_MSK, QAM, cross_evaluate, train

from conftest import record_criterion

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
GOLDEN = Path(__file__).parent / "golden"


def test_c1_layer_oracle():
    t = time.perf_counter()
    r64 = check_layer_oracle(np.float64, 1e-10)
    r32 = check_layer_oracle(np.float32, 1e-5)
    secs = time.perf_counter() - t
    ok = r64.passed and r32.passed and secs < 10
    record_criterion(1, "layer oracle", ok,
                     f"64-bit {r64.value:.1e} (<1e-10), 32-bit {r32.value:.1e} (<1e-5), {secs:.1f} s (<10)")
    assert ok


def test_c2_dft_oracle():
    r = check_dft(1024, 1e-6)
    ok = r.passed and r.seconds < 10
    record_criterion(2, "DFT oracle", ok, f"max rel err {r.value:.1e} (<1e-6), tone index ok, {r.seconds:.2f} s")
    assert ok


def test_c3_gradient_checks():
    t = time.perf_counter()
    results = check_gradients(1e-4)
    secs = time.perf_counter() - t
    worst = max(r.value for r in results)
    ok = all(r.passed for r in results) and secs < 120
    record_criterion(3, "gradient checks", ok, f"{len(results)} checks, worst {worst:.1e} (<1e-4), {secs:.1f} s")
    assert ok


def test_c4_topology(capsys):
    net = build_cap(32768, 8)
    table = layer_table(net)
    golden = (GOLDEN / "inspect_32768.txt").read_text()
    assert cli.main(["inspect", "--frame-length", "32768", "--classes", "8"]) == 0
    printed = capsys.readouterr().out
    chains = net.activation_shapes()
    walked = True
    for kind, branch in net.branches.items():
        x = np.zeros((1, 32768, kind.channels), np.float32)
        measured = [("Input", x.shape[1:])]
        for s in range(6):
            for layer in branch.layers[4 * s:4 * s + 4]:
                x = layer.forward(x, training=False)
            measured.append((chains[kind][s + 1][0], x.shape[1:]))
        measured.append(("FC", branch.layers[-1].forward(x, training=False).shape[1:]))
        walked &= measured == chains[kind]
    logits = net.forward({k: np.zeros((1, 32768, k.channels), np.float32) for k in net.kinds})
    ok_shapes = walked and all(c[-2][1] == (96,) and c[1][1][0] == 16384 for c in chains.values())
    ok = table == golden and printed == golden and ok_shapes and logits.shape == (1, 8)
    record_criterion(4, "topology conformance", ok,
                     f"golden diff {'clean' if table == golden else 'DIFFERS'}, forward walk matches={walked}, logits {logits.shape}")
    assert ok


def _freq(x, order):
    kind = FeatureKind.parse(f"FREQ{order}")
    return extract_features(np.stack([x.real, x.imag], -1), np.float64, (kind,))[kind]


def test_c5_line_properties():
    t = time.perf_counter()
    n = 32768
    bpsk = synthesize_frame(FrameSpec("BPSK", 10, 0.35, 0.015, np.inf, n, 1)).iq
    qpsk = synthesize_frame(FrameSpec("QPSK", 10, 0.35, 0.015, np.inf, n, 1)).iq
    b2 = [s for s in detect_spectral_lines(_freq(bpsk, 2)) if abs(s.frequency - 0.03) <= 2 / n]
    ok_bpsk = bool(b2) and b2[0].prominence_db >= 15
    ok_q2 = not detect_spectral_lines(_freq(qpsk, 2), 6.0)
    ok_q4 = any(abs(s.frequency - 0.06) <= 2 / n for s in detect_spectral_lines(_freq(qpsk, 4)))
    shift_err = 0.0
    rng = np.random.default_rng(5)
    for scheme, order in (("BPSK", 2), ("QPSK", 4), ("PSK8", 8), ("MSK", 2)):
        x = synthesize_frame(FrameSpec(scheme, 8, 0.5, 0.002, np.inf, n, 4)).iq
        delta = float(rng.uniform(-0.005, 0.005))
        y = x * np.exp(2j * np.pi * delta * np.arange(n))
        a = max(detect_spectral_lines(_freq(x, order)), key=lambda s: s.prominence_db)
        b = max(detect_spectral_lines(_freq(y, order)), key=lambda s: s.prominence_db)
        shift_err = max(shift_err, abs(float(wrap_frequency(b.frequency - a.frequency)) - order * delta) * n)
    secs = time.perf_counter() - t
    ok = ok_bpsk and ok_q2 and ok_q4 and shift_err <= 1 and secs < 120
    record_criterion(5, "CSP line properties", ok,
                     f"BPSK x2 {b2[0].prominence_db if b2 else float('nan'):.1f} dB, QPSK x2 none={ok_q2}, "
                     f"QPSK x4 found={ok_q4}, shift err {shift_err:.2f} bin, {secs:.1f} s")
    assert ok


def test_c6_preprocessing():
    rng = np.random.default_rng(6)
    errors, powers, scale_err = [], [], 0.0
    for i in range(100):
        scheme = ALL_SCHEMES[i % len(ALL_SCHEMES)]
        f0 = float(rng.uniform(0.01, 0.02))
        spec = FrameSpec(scheme, int(rng.integers(2, 24)), float(rng.uniform(0.1, 1.0)), f0, 10.0, 32768, 1000 + i)
        x = synthesize_frame(spec).iq
        y, boi, _ = preprocess_frame(x)
        errors.append(abs(boi.center_freq - f0))
        powers.append(np.mean(np.abs(y) ** 2))
        if i % 10 == 0:
            c = float(10 ** rng.uniform(-3, 3))
            y2, _, _ = preprocess_frame(c * x)
            scale_err = max(scale_err, float(np.max(np.abs(y2 - y))))
            f1 = extract_features(np.stack([y.real, y.imag], -1), np.float64)
            f2 = extract_features(np.stack([y2.real, y2.imag], -1), np.float64)
            scale_err = max(scale_err, max(float(np.max(np.abs(f1[k] - f2[k]) / (np.max(np.abs(f1[k])) + 1e-300)))
                                           for k in f1))
    for c in (1e-6, 1.0, 1e6):
        z = c * (rng.standard_normal(4096) + 1j * rng.standard_normal(4096))
        powers.append(np.mean(np.abs(normalize_utp(z)[0]) ** 2))
    frac = float(np.mean(np.asarray(errors) < 0.002))
    power_err = float(np.max(np.abs(np.asarray(powers) - 1)))
    ok = frac >= 0.95 and power_err <= 1e-6 and scale_err <= 1e-5
    record_criterion(6, "preprocessing", ok,
                     f"BOI |err|<0.002 in {frac:.0%} of 100 (>=95%), UTP max |P-1| {power_err:.1e}, "
                     f"scale err {scale_err:.1e} (<=1e-5)")
    assert ok


def test_c7_toy_training(tmp_path):
    config = load_config(CONFIGS / "toy.toml")
    t = time.perf_counter()
    ds = preprocess_dataset(generate_dataset(config.dataset), **config.preprocess.params())
    result = train(ds, config, tmp_path / "run")
    secs = time.perf_counter() - t
    report = result.test_report
    sizes = [len(s) for s in result.split]
    one = with_section(config, "train", max_epochs=1)
    rerun = train(ds, one, tmp_path / "rerun")
    same = rerun.history[0] == result.history[0]
    ok = report.p_cc >= 0.80 and secs <= 45 * 60 and same
    record_criterion(7, "toy-scale training", ok,
                     f"held-out P_cc {report.p_cc:.3f} (>=0.80, chance 0.25), split {sizes}, "
                     f"{secs / 60:.1f} min on 1 core (<=45), epoch-1 rerun identical={same}")
    assert ok


def test_c8_generalization_direction(tmp_path):
    ca, cb = load_config(CONFIGS / "desk-a.toml"), load_config(CONFIGS / "desk-b.toml")
    t = time.perf_counter()
    ds_a = preprocess_dataset(generate_dataset(ca.dataset), **ca.preprocess.params())
    ds_b = preprocess_dataset(generate_dataset(cb.dataset), **cb.preprocess.params())
    result = train(ds_a, ca, tmp_path / "a")
    cross = cross_evaluate(result.classifier, ds_b, result.test_report, ds_a.config)
    secs = time.perf_counter() - t
    psk, qam = cross.subset_drop(PSK_MSK), cross.subset_drop(QAM)
    ok = psk <= 0.10 and qam > psk
    record_criterion(8, "generalization direction", ok,
                     f"A test P_cc {result.test_report.p_cc:.3f}, A->B P_cc {cross.report.p_cc:.3f}; "
                     f"PSK/MSK drop {psk:+.3f} (<=0.10), QAM drop {qam:+.3f} (> PSK/MSK), {secs / 60:.1f} min")
    assert ok


def _tree_equal(a: Path, b: Path) -> tuple[bool, int]:
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    if files_a != files_b:
        return False, len(files_a)
    _, mismatch, errors = filecmp.cmpfiles(a, b, [str(p) for p in files_a], shallow=False)
    return not mismatch and not errors, len(files_a)


def test_c9_repro_determinism(tmp_path, capsys):
    args = ["--config-a", str(CONFIGS / "repro-tiny-a.toml"), "--config-b", str(CONFIGS / "repro-tiny-b.toml")]
    for run in ("one", "two"):
        assert cli.main(["--threads", "1", "repro", *args, "--out", str(tmp_path / run)]) == 0
    capsys.readouterr()
    same, count = _tree_equal(tmp_path / "one", tmp_path / "two")
    checkpoints = sorted((tmp_path / "one").rglob("checkpoint.bin"))
    ok = same and len(checkpoints) == 2
    record_criterion(9, "repro determinism", ok,
                     f"{count} files byte-identical={same}, {len(checkpoints)} checkpoints")
    assert ok
