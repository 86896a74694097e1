import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from respsound.audio_io import AudioRecord
from respsound.dsp import FramingConfig
from respsound.features import (
    FEATURE_NAMES,
    FrameFeatures,
    extract,
    mean_crossing_irregularity,
    record_frame_features,
    rms,
    spectral_bandwidth,
    spectral_centroid,
    spectral_flux,
    window_features,
    zcr,
)


class TestRms:
    def test_constant(self):
        assert rms(np.full(64, -0.3)) == pytest.approx(0.3, abs=1e-15)

    def test_zeros(self):
        assert rms(np.zeros(10)) == 0.0

    def test_three_four(self):
        assert rms([3.0, 4.0]) == pytest.approx(math.sqrt(12.5), abs=1e-15)

    def test_empty(self):
        with pytest.raises(ValueError):
            rms([])


class TestZcr:
    def test_alternating(self):
        assert zcr(np.tile([1.0, -1.0], 50)) == 1.0

    def test_positive(self):
        assert zcr(np.full(100, 0.2)) == 0.0

    def test_cosine_phase_500hz(self):
        frame = np.cos(2 * np.pi * 500 * np.arange(1024) / 8000)
        assert oracles.count_zero_crossings(frame) == 128
        assert zcr(frame) == 128 / 1023

    def test_sine_phase_500hz_matches_direct_count(self):
        # zero-phase sine: sample 0 is exactly 0 and the last crossing falls
        # past the end of the frame, so the direct count is 127
        frame = np.sin(2 * np.pi * 500 * np.arange(1024) / 8000)
        assert zcr(frame) == oracles.count_zero_crossings(frame) / 1023

    def test_zero_takes_previous_sign(self):
        assert zcr([1.0, 0.0, 0.0, 1.0]) == 0.0
        assert zcr([1.0, 0.0, -1.0]) == 0.5
        assert zcr([0.0, 0.0, -1.0, 1.0]) == pytest.approx(1 / 3)

    def test_too_short(self):
        with pytest.raises(ValueError):
            zcr([1.0])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.sampled_from([-2.0, -1.0, 0.0, 1.0, 3.0]), min_size=2, max_size=60))
    def test_against_direct_count(self, values):
        assert zcr(values) == oracles.count_zero_crossings(values) / (len(values) - 1)


class TestSpectralShape:
    def _spec(self, **bins):
        p = np.zeros(513)
        for k, v in bins.items():
            p[int(k[1:])] = v
        return p

    def test_centroid_single_bin(self):
        assert spectral_centroid(self._spec(b100=3.0)) == 100.0

    def test_centroid_pair(self):
        assert spectral_centroid(self._spec(b100=1.0, b200=1.0)) == 150.0

    def test_centroid_squared_weighting(self):
        assert spectral_centroid(self._spec(b100=1.0, b200=2.0)) == pytest.approx(180.0, abs=1e-12)

    def test_bandwidth_single_bin(self):
        assert spectral_bandwidth(self._spec(b100=1.0)) == 0.0

    def test_bandwidth_pair(self):
        assert spectral_bandwidth(self._spec(b100=1.0, b200=1.0)) == pytest.approx(50.0, abs=1e-12)

    def test_degenerate_zero(self):
        assert spectral_centroid(np.zeros(513)) == 0.0
        assert spectral_bandwidth(np.zeros(513)) == 0.0

    def test_random_against_summation(self, rng):
        for _ in range(20):
            p = rng.exponential(1.0, 513)
            assert oracles.close(spectral_centroid(p), oracles.centroid(p), 1e-10)
            assert oracles.close(spectral_bandwidth(p), oracles.bandwidth(p), 1e-10)

    def test_scale_invariant(self, rng):
        p = rng.exponential(1.0, 513)
        assert spectral_centroid(p * 1e-30) == pytest.approx(spectral_centroid(p), rel=1e-12)


class TestFlux:
    def test_identical(self):
        p = np.arange(513.0)
        assert spectral_flux(p, p) == 0.0

    def test_first_frame(self):
        assert spectral_flux(np.ones(513), None) == 0.0

    def test_unit_step(self):
        assert spectral_flux(np.full(513, 2.0), np.full(513, 1.0)) == pytest.approx(math.sqrt(513) / 1023, abs=1e-15)

    def test_mismatch(self):
        with pytest.raises(ValueError):
            spectral_flux(np.ones(513), np.ones(257))


class TestMci:
    def test_constant(self):
        assert mean_crossing_irregularity(np.full(20, 0.4)) == 0.0

    def test_alternating(self):
        assert mean_crossing_irregularity([1.0, 3.0] * 10) == 0.0

    def test_worked_series(self):
        s = [0, 2, 0, 2, 2, 2, 0, 2]
        expected = oracles.mci(s)
        assert expected == pytest.approx(math.sqrt(0.75) / 1.5)
        assert abs(mean_crossing_irregularity(s) - expected) <= 1e-12

    def test_too_short(self):
        with pytest.raises(ValueError):
            mean_crossing_irregularity([1.0])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 1, allow_nan=False), min_size=2, max_size=80))
    def test_against_oracle(self, s):
        assert oracles.close(mean_crossing_irregularity(s), oracles.mci(s), 1e-10)


class TestWindowFeatures:
    def test_constant_frames(self):
        f = FrameFeatures(0.2, 0.1, 50.0, 5.0, 0.01)
        v = window_features([f] * 10, global_max_rms=0.4)
        assert v.varRMS == v.varSC == v.varSB == v.varSF == 0.0
        assert v.stdZCR == 0.0 and v.mciZCR == 0.0
        assert v.amrRMS == 1.0
        assert v.rmrRMS == 0.5

    def test_two_frames(self):
        v = window_features([FrameFeatures(1, 0, 0, 0, 0), FrameFeatures(3, 0, 0, 0, 0)], global_max_rms=3)
        assert (v.meanRMS, v.varRMS, v.amrRMS) == (2.0, 1.0, 1.5)

    def test_too_few_frames(self):
        with pytest.raises(ValueError):
            window_features([FrameFeatures(1, 0, 0, 0, 0)], 1.0)

    def test_silent_is_degenerate_not_nan(self):
        v = window_features(np.zeros((10, 5)), 0.0)
        assert v.degenerate
        assert all(math.isfinite(x) for x in v.to_array())

    def test_near_constant_variance_stable(self):
        r = 1e8 + np.array([0.0, 1e-4, 2e-4, 1e-4] * 10)
        m = np.zeros((40, 5))
        m[:, 0] = r
        v = window_features(m, float(r.max()))
        assert oracles.close(v.varRMS, oracles.pvar(list(r)), 1e-6)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 200))
    def test_against_oracle(self, seed, n):
        m = np.random.default_rng(seed).uniform(0.01, 1.0, (n, 5))
        g = float(m[:, 0].max()) * 1.3
        v = window_features(m, g)
        ref = oracles.window_stats([tuple(row) for row in m], g)
        for name in FEATURE_NAMES:
            assert oracles.close(getattr(v, name), ref[name], 1e-10), name


class TestExtract:
    @pytest.mark.parametrize("seconds,frames", [(2.5, 149), (5.0, 305)])
    def test_single_window(self, rng, seconds, frames):
        rec = AudioRecord(rng.uniform(-0.5, 0.5, int(seconds * 8000)), 8000)
        matrix, _ = record_frame_features(rec)
        assert matrix.shape == (frames, 5)
        assert len(extract(rec, window_seconds=seconds)) == 1

    def test_equals_window_of_frame_matrix(self, rng):
        rec = AudioRecord(rng.uniform(-0.5, 0.5, 20000), 8000)
        matrix, _ = record_frame_features(rec)
        ref = oracles.window_stats([tuple(r) for r in matrix], float(matrix[:, 0].max()))
        (v,) = extract(rec, window_seconds=2.5)
        for name in FEATURE_NAMES:
            assert oracles.close(getattr(v, name), ref[name], 1e-10)

    def test_frame_features_match_scalar_functions(self, rng):
        from respsound.dsp import frame_signal, power_spectra

        rec = AudioRecord(rng.uniform(-0.5, 0.5, 3000), 8000)
        frames = frame_signal(rec)
        power = power_spectra(frames)
        matrix, _ = record_frame_features(rec)
        for i in range(len(frames)):
            prev = power[i - 1] if i else None
            expected = (rms(frames[i]), zcr(frames[i]), spectral_centroid(power[i]),
                        spectral_bandwidth(power[i]), spectral_flux(power[i], prev))
            assert np.allclose(matrix[i], expected, rtol=1e-12, atol=1e-15)

    def test_multi_window_sf_chained(self, rng):
        rec = AudioRecord(rng.uniform(-0.5, 0.5, 40000), 8000)
        vecs = extract(rec, window_seconds=2.5)
        assert len(vecs) == 2
        assert [v.window_index for v in vecs] == [0, 1]
        assert max(v.rmrRMS for v in vecs) == 1.0

    def test_too_short(self):
        with pytest.raises(ValueError):
            extract(AudioRecord(np.zeros(1000), 8000), window_seconds=2.5)

    def test_tone_vs_noise(self, rng):
        n = 20000
        tone = np.sin(2 * np.pi * 600 * np.arange(n) / 8000)
        noise = rng.standard_normal(n)
        noise *= np.sqrt(np.mean(tone ** 2) / np.mean(noise ** 2))
        noise = np.clip(noise, -1, 1)
        (t,) = extract(AudioRecord(0.5 * tone, 8000), window_seconds=2.5)
        (w,) = extract(AudioRecord(0.5 * noise, 8000), window_seconds=2.5)
        assert t.varSB < w.varSB
        assert t.stdZCR < w.stdZCR
        assert w.meanSB > t.meanSB

    def test_tonal_vs_impulsive_zcr(self, rng):
        n = 20000
        tone = 0.3 * np.sin(2 * np.pi * 400 * np.arange(n) / 8000)
        burst = np.zeros(n)
        for start in (2000, 9000, 15000):
            burst[start:start + 800] = rng.standard_normal(800) * np.exp(-np.arange(800) / 200)
        burst *= np.sqrt(np.mean(tone ** 2) / np.mean(burst ** 2))
        burst = np.clip(burst, -1, 1)
        (t,) = extract(AudioRecord(tone, 8000), window_seconds=2.5)
        (b,) = extract(AudioRecord(burst, 8000), window_seconds=2.5)
        assert t.stdZCR < b.stdZCR

    def test_all_finite_nonsilent(self, rng):
        rec = AudioRecord(rng.uniform(-0.1, 0.1, 40000), 8000)
        assert all(np.isfinite(v.to_array()).all() for v in extract(rec))

    def test_silent_record_flagged(self):
        (v,) = extract(AudioRecord(np.zeros(40000), 8000))
        assert v.degenerate and np.isfinite(v.to_array()).all()

    def test_custom_config(self, rng):
        cfg = FramingConfig(frame_len=512, hop=64, fft_size=512)
        rec = AudioRecord(rng.uniform(-0.5, 0.5, 8000), 8000)
        assert len(extract(rec, cfg, window_seconds=1.0)) == 1
