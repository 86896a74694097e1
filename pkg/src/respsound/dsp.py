"""Framing and short-time power spectra."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from respsound.audio_io import AudioRecord


@dataclass(frozen=True)
class FramingConfig:
    """Frame geometry. Defaults: 128 ms frames, 87.5% overlap at 8 kHz."""

    frame_len: int = 1024
    hop: int = 128
    fft_size: int = 1024
    sample_rate: int = 8000

    def __post_init__(self):
        if not 1 <= self.hop <= self.frame_len:
            raise ValueError(f"hop must be in [1, frame_len], got {self.hop}")
        if self.fft_size < self.frame_len or self.fft_size & (self.fft_size - 1):
            raise ValueError(f"fft_size must be a power of two >= frame_len, got {self.fft_size}")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def hop_seconds(self) -> float:
        return self.hop / self.sample_rate

    def frame_count(self, n_samples: int) -> int:
        if n_samples < self.frame_len:
            return 0
        return (n_samples - self.frame_len) // self.hop + 1

    def frames_per_window(self, window_seconds: float) -> int:
        """Frames that fit inside ``window_seconds`` of audio (149 for 2.5 s, 305 for 5 s)."""
        return self.frame_count(int(round(window_seconds * self.sample_rate)))


@dataclass(frozen=True)
class FrameSpectrum:
    frame_index: int
    power: np.ndarray


def frame_signal(record: AudioRecord, cfg: FramingConfig = FramingConfig()) -> np.ndarray:
    """Return a ``(n_frames, frame_len)`` view; frame i starts at sample ``i * hop``."""
    if record.sample_rate != cfg.sample_rate:
        raise ValueError(
            f"record rate {record.sample_rate} Hz does not match framing rate {cfg.sample_rate} Hz"
        )
    return frame_samples(record.samples, cfg)


def frame_samples(samples: np.ndarray, cfg: FramingConfig) -> np.ndarray:
    n = cfg.frame_count(len(samples))
    if n == 0:
        return np.zeros((0, cfg.frame_len))
    view = np.lib.stride_tricks.sliding_window_view(samples, cfg.frame_len)
    return view[:: cfg.hop][:n]


@lru_cache(maxsize=16)
def _hamming(n: int) -> np.ndarray:
    i = np.arange(n)
    w = 0.54 - 0.46 * np.cos(2.0 * np.pi * i / (n - 1))
    w.setflags(write=False)
    return w


def hamming_window(n: int) -> np.ndarray:
    if n < 2:
        raise ValueError(f"window length must be >= 2, got {n}")
    return _hamming(n).copy()


def power_spectra(frames: np.ndarray, cfg: FramingConfig = FramingConfig()) -> np.ndarray:
    """One-sided power |X[k]|^2, k = 0..fft_size/2, for each row of ``frames``."""
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if frames.shape[1] != cfg.frame_len:
        raise ValueError(f"frame length {frames.shape[1]} != {cfg.frame_len}")
    spec = np.fft.rfft(frames * _hamming(cfg.frame_len), n=cfg.fft_size, axis=1)
    return spec.real ** 2 + spec.imag ** 2


def power_spectrum(frame, cfg: FramingConfig = FramingConfig(), frame_index: int = 0) -> FrameSpectrum:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 1:
        raise ValueError("expected a single frame")
    return FrameSpectrum(frame_index, power_spectra(frame[None, :], cfg)[0])
