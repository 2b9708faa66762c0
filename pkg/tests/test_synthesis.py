import numpy as np
import pytest
from hypothesis import given, strategies as st

from cspcap.synthesis import (CONFIG_2018, CONFIG_2022, FrameSpec, GenerationConfig, ModulationScheme,
                              constellation, map_symbols, srrc_taps, synthesize_frame)


def srrc_reference(beta, T0, span):
    """Independent closed-form SRRC evaluation at integer sample offsets, limits taken numerically."""
    out = []
    for k in range(-span * T0 // 2, span * T0 // 2 + 1):
        t = k / T0
        if t == 0:
            v = 1 + beta * (4 / np.pi - 1)
        elif abs(abs(4 * beta * t) - 1) < 1e-12:
            v = beta / np.sqrt(2) * ((1 + 2 / np.pi) * np.sin(np.pi / (4 * beta))
                                     + (1 - 2 / np.pi) * np.cos(np.pi / (4 * beta)))
        else:
            num = np.sin(np.pi * t * (1 - beta)) + 4 * beta * t * np.cos(np.pi * t * (1 + beta))
            v = num / (np.pi * t * (1 - (4 * beta * t) ** 2))
        out.append(v)
    out = np.array(out)
    return out / np.sqrt(np.sum(out ** 2))


def test_bpsk_mapping_is_antipodal():
    np.testing.assert_array_equal(map_symbols("BPSK", [0, 1]), [1, -1])


def test_qam16_points_and_unit_energy():
    pts = constellation(ModulationScheme.QAM16)
    grid = np.array([a + 1j * b for a in (-3, -1, 1, 3) for b in (-3, -1, 1, 3)])
    assert np.mean(np.abs(grid) ** 2) == pytest.approx(10.0)
    np.testing.assert_allclose(np.sort_complex(pts), np.sort_complex(grid / np.sqrt(10)), atol=1e-12)
    bits = np.array([(k >> s) & 1 for k in range(16) for s in (3, 2, 1, 0)])
    assert np.mean(np.abs(map_symbols("QAM16", bits)) ** 2) == pytest.approx(1.0)


@pytest.mark.parametrize("scheme", ["BPSK", "QPSK", "PSK8", "QAM16", "QAM64", "QAM256"])
def test_constellations_have_unit_mean_energy(scheme):
    assert np.mean(np.abs(constellation(scheme)) ** 2) == pytest.approx(1.0)


def test_gray_labels_neighbours_differ_by_one_bit():
    pts = constellation("PSK8")
    order = np.argsort(np.angle(pts))
    for a, b in zip(order, np.roll(order, -1)):
        assert bin(int(a) ^ int(b)).count("1") == 1


def test_dqpsk_consecutive_zero_dibits_rotate_by_quarter_pi():
    s = map_symbols("DQPSK_PI4", [0, 0, 0, 0])
    step = np.angle(s[1] / s[0])
    assert step == pytest.approx(np.pi / 4)
    assert np.abs(s) == pytest.approx(1.0)


def test_msk_symbols_are_plus_minus_one():
    assert set(map_symbols("MSK", [0, 1, 1, 0]).tolist()) == {1.0, -1.0}


def test_bit_count_must_fill_symbols():
    with pytest.raises(ValueError):
        map_symbols("QAM16", [0, 1, 1])


@pytest.mark.parametrize("beta,T0", [(0.35, 8), (0.25, 4), (0.5, 10), (1.0, 3)])
def test_srrc_matches_independent_formula(beta, T0):
    np.testing.assert_allclose(srrc_taps(beta, T0, 16), srrc_reference(beta, T0, 16), atol=1e-9)


@given(st.floats(0.25, 1.0), st.integers(2, 12))
def test_srrc_even_and_nyquist(beta, T0):
    h = srrc_taps(beta, T0, 32)
    np.testing.assert_allclose(h, h[::-1], atol=1e-12)
    rc = np.convolve(h, h)
    mid = rc.size // 2
    samples = rc[mid % T0::T0]
    centre = mid // T0
    expected = np.zeros_like(samples)
    expected[centre] = 1.0
    np.testing.assert_allclose(samples / rc[mid], expected, atol=1e-3)


def test_srrc_argument_checks():
    with pytest.raises(ValueError):
        srrc_taps(0.0, 4)
    with pytest.raises(ValueError):
        srrc_taps(0.5, 4, span_symbols=4)


def test_noiseless_bpsk_stays_in_band():
    spec = FrameSpec("BPSK", 8, 0.35, 0.0, np.inf, 4096, 3)
    x = synthesize_frame(spec).iq
    p = np.abs(np.fft.fft(x)) ** 2
    f = np.abs(np.fft.fftfreq(x.size))
    outside = p[f > (1 + 0.35) / 16 + 4 / x.size].sum()
    assert outside < 0.01 * p.sum()


def test_msk_envelope_is_constant():
    x = synthesize_frame(FrameSpec("MSK", 6, None, 0.01, np.inf, 4096, 5)).iq
    np.testing.assert_allclose(np.abs(x), 1.0, rtol=1e-6)


def test_bpsk_squared_spectrum_peaks_at_twice_cfo():
    x = synthesize_frame(FrameSpec("BPSK", 10, 0.5, 0.01, np.inf, 8192, 9)).iq
    spec = np.abs(np.fft.fftshift(np.fft.fft(x ** 2)))
    peak = (np.argmax(spec) - x.size // 2) / x.size
    assert abs(peak - 0.02) <= 1 / x.size


@pytest.mark.parametrize("snr_db", [0.0, 10.0])
def test_in_band_snr_matches_target(snr_db):
    spec = FrameSpec("QPSK", 8, 0.5, 0.0, snr_db, 32768, 2)
    clean = synthesize_frame(FrameSpec("QPSK", 8, 0.5, 0.0, np.inf, 32768, 2)).iq
    noise = synthesize_frame(spec).iq - clean
    in_band = np.mean(np.abs(noise) ** 2) * spec.occupied_bandwidth()
    measured = 10 * np.log10(np.mean(np.abs(clean) ** 2) / in_band)
    assert measured == pytest.approx(snr_db, abs=0.2)


def test_frame_spec_validation():
    with pytest.raises(ValueError):
        FrameSpec("BPSK", 8, 0.05, 0.0, 10, 1024)
    with pytest.raises(ValueError):
        FrameSpec("BPSK", 8, 0.5, 0.0, 10, 1000)
    with pytest.raises(ValueError):
        synthesize_frame(FrameSpec("BPSK", 23, 0.5, 0.0, 10, 256))


def test_reference_configs_draw_disjoint_cfo_ranges():
    a = [s.f0 for s in CONFIG_2018.with_overrides(frames_per_class=50, frame_length=1024).frame_specs()]
    b = [s.f0 for s in CONFIG_2022.with_overrides(frames_per_class=50, frame_length=1024).frame_specs()]
    assert all(-0.001 < f < 0.001 for f in a)
    assert all(0.01 < f < 0.02 for f in b)
    assert max(a) < min(b)


@given(st.integers(0, 2**32))
def test_frame_specs_respect_config_ranges(seed):
    cfg = GenerationConfig(frames_per_class=3, frame_length=1024, master_seed=seed, t0_min=2, t0_max=9,
                           snr_min_db=1, snr_max_db=18, snr_center_db=12)
    for s in cfg.frame_specs():
        assert cfg.cfo_low <= s.f0 <= cfg.cfo_high
        assert 2 <= s.T0 <= 9
        assert 1 <= s.snr_db <= 18
        assert (s.beta is None) == (s.scheme is ModulationScheme.MSK)


def test_snr_draw_mean_sits_at_center():
    cfg = GenerationConfig(snr_min_db=0, snr_max_db=12, snr_center_db=9)
    draws = cfg.draw_snr(np.random.default_rng(0), 20000)
    assert draws.mean() == pytest.approx(9.0, abs=0.05)
    assert draws.min() >= 0 and draws.max() <= 12


def test_same_seed_same_frames():
    spec = FrameSpec("QAM64", 5, 0.3, 0.001, 8, 2048, 77)
    np.testing.assert_array_equal(synthesize_frame(spec).iq, synthesize_frame(spec).iq)
