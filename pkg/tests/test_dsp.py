import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_dft_power
from respsound.audio_io import AudioRecord
from respsound.dsp import FramingConfig, frame_signal, hamming_window, power_spectra, power_spectrum


def test_default_geometry():
    cfg = FramingConfig()
    assert cfg.frame_len / cfg.sample_rate == 0.128
    assert cfg.hop / cfg.frame_len == 0.125
    assert cfg.n_bins == 513


@pytest.mark.parametrize("kwargs", [dict(hop=0), dict(hop=2048), dict(fft_size=1000), dict(fft_size=512)])
def test_config_invariants(kwargs):
    with pytest.raises(ValueError):
        FramingConfig(**kwargs)


@pytest.mark.parametrize("n,frames", [(20000, 149), (40000, 305), (1000, 0), (1024, 1), (1151, 1), (1152, 2)])
def test_frame_count(n, frames):
    assert frame_signal(AudioRecord(np.zeros(n), 8000)).shape == (frames, 1024)


def test_rate_mismatch():
    with pytest.raises(ValueError):
        frame_signal(AudioRecord(np.zeros(2000), 16000))


def test_frame_coverage(rng):
    x = rng.uniform(-1, 1, 5000)
    cfg = FramingConfig(frame_len=256, hop=32, fft_size=256)
    frames = frame_signal(AudioRecord(x, 8000), cfg)
    for i, f in enumerate(frames):
        assert np.array_equal(f, x[i * 32:i * 32 + 256])


def test_hop_shift_moves_frame_index(rng):
    x = rng.uniform(-1, 1, 6000)
    cfg = FramingConfig()
    a = frame_signal(AudioRecord(x, 8000), cfg)
    b = frame_signal(AudioRecord(x[cfg.hop:], 8000), cfg)
    assert np.array_equal(a[1:1 + len(b)], b)


class TestHamming:
    def test_endpoints(self):
        w = hamming_window(1024)
        assert abs(w[0] - 0.08) < 1e-15 and abs(w[-1] - 0.08) < 1e-15

    def test_center_pair(self):
        w = hamming_window(1024)
        assert abs(w[511] - 0.99999) < 1e-4 and abs(w[512] - 0.99999) < 1e-4
        assert w[511] == pytest.approx(w[512], abs=1e-15)

    def test_odd_peak(self):
        assert hamming_window(9)[4] == pytest.approx(1.0, abs=1e-15)

    def test_symmetric(self):
        w = hamming_window(257)
        assert np.allclose(w, w[::-1], atol=1e-15)

    def test_too_short(self):
        with pytest.raises(ValueError):
            hamming_window(1)


class TestPowerSpectrum:
    def test_zero_frame(self):
        assert not power_spectrum(np.zeros(1024)).power.any()

    def test_bin_64_sine(self):
        n = np.arange(1024)
        frame = np.sin(2 * np.pi * 64 * n / 1024)
        assert np.argmax(naive_dft_power(frame, 1024)) == 64
        spec = power_spectrum(frame)
        assert len(spec.power) == 513
        assert np.argmax(spec.power) == 64

    def test_matches_naive_dft(self, rng):
        for _ in range(5):
            frame = rng.uniform(-1, 1, 1024)
            ours = power_spectrum(frame).power
            ref = naive_dft_power(frame, 1024)
            assert np.all(np.abs(ours - ref) <= 1e-9 * np.abs(ref) + 1e-12)

    def test_zero_padding(self, rng):
        cfg = FramingConfig(frame_len=200, hop=50, fft_size=256)
        frame = rng.uniform(-1, 1, 200)
        ref = naive_dft_power(frame, 256)
        ours = power_spectrum(frame, cfg).power
        assert np.all(np.abs(ours - ref) <= 1e-9 * np.abs(ref) + 1e-12)

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            power_spectrum(np.zeros(1000))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_parseval(self, seed):
        frame = np.random.default_rng(seed).uniform(-1, 1, 1024)
        p = power_spectra(frame[None, :])[0]
        w = hamming_window(1024)
        lhs = np.sum((w * frame) ** 2)
        rhs = (p[0] + p[-1] + 2 * p[1:-1].sum()) / 1024
        assert abs(lhs - rhs) <= 1e-8 * lhs

    def test_non_negative(self, rng):
        assert (power_spectra(rng.uniform(-1, 1, (20, 1024))) >= 0).all()
