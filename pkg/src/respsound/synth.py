"""Synthetic stand-ins for the five respiratory sound classes.

Each proxy encodes only coarse acoustic contrasts: tonal vs. percussive,
narrow vs. wide band, short vs. long bursts, and loudness. They are not
clinically realistic; they exist so the whole pipeline can be exercised.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal

from respsound.audio_io import CLASS_LABELS, PIPELINE_RATE, AudioRecord, write_manifest, write_wav

BASE_RMS = 0.015
PEAK_LIMIT = 0.95
GAIN_JITTER_DB = 2.0
# relative loudness: stridor is louder than wheeze, coughs are explosive
CLASS_LEVEL = {"wheeze": 1.0, "stridor": 2.0, "cough": 1.0, "throat_clear": 0.6, "other": 1.0}


@dataclass(frozen=True)
class CorpusSpec:
    counts: dict[str, int] = field(default_factory=lambda: {c: 50 for c in CLASS_LABELS})
    segment_seconds: float = 5.0
    snr_db: float = 20.0
    seed: int = 0
    sample_rate: int = PIPELINE_RATE

    def __post_init__(self):
        unknown = set(self.counts) - set(GENERATORS)
        if unknown:
            raise ValueError(f"no generator for classes {sorted(unknown)}")
        if any(c < 0 for c in self.counts.values()):
            raise ValueError("class counts must be non-negative")
        if not math.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")
        if self.segment_seconds <= 0:
            raise ValueError("segment_seconds must be positive")

    @classmethod
    def from_json(cls, path) -> "CorpusSpec":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**raw)


def _bandpass(x, lo, hi, fs, order=4):
    sos = signal.butter(order, [lo, hi], btype="bandpass", fs=fs, output="sos")
    return signal.sosfiltfilt(sos, x)


def _normalize(x):
    r = np.sqrt(np.mean(x * x))
    return x / r if r > 0 else x


def _place_bursts(rng, n, lengths):
    """Non-overlapping random start offsets for bursts of the given lengths."""
    free = n - sum(lengths)
    cuts = np.sort(rng.uniform(0, free, size=len(lengths)))
    starts, offset = [], 0
    for cut, length in zip(cuts, lengths):
        starts.append(int(cut) + offset)
        offset += length
    return starts


def wheeze(rng, n, fs):
    t = np.arange(n) / fs
    rate = rng.uniform(3.0, 6.0)
    freq = 600.0 + 50.0 * np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi))
    phase = 2 * np.pi * np.cumsum(freq) / fs + rng.uniform(0, 2 * np.pi)
    am = 1.0 + 0.3 * np.sin(2 * np.pi * rng.uniform(0.2, 0.5) * t + rng.uniform(0, 2 * np.pi))
    return _normalize(am * (np.sin(phase) + 0.15 * np.sin(2 * phase)))


def stridor(rng, n, fs):
    t = np.arange(n) / fs
    f0 = rng.uniform(250.0, 900.0)
    tone = np.sin(2 * np.pi * f0 * t + rng.uniform(0, 2 * np.pi))
    noise = _normalize(_bandpass(rng.standard_normal(n), 100.0, 1000.0, fs))
    x = _normalize(tone) + noise
    return _normalize(x)


def cough(rng, n, fs):
    x = np.zeros(n)
    lengths = [int(rng.uniform(0.08, 0.15) * fs) for _ in range(rng.integers(2, 5))]
    for start, length in zip(_place_bursts(rng, n, lengths), lengths):
        k = np.arange(length)
        env = np.exp(-k / (0.25 * length)) * np.minimum(1.0, k / (0.005 * fs))
        x[start:start + length] += env * _bandpass(rng.standard_normal(length), 150.0, 3500.0, fs, order=2)
    return _normalize(x)


def throat_clear(rng, n, fs):
    x = np.zeros(n)
    lengths = [int(rng.uniform(0.2, 0.4) * fs) for _ in range(rng.integers(1, 3))]
    for start, length in zip(_place_bursts(rng, n, lengths), lengths):
        k = np.arange(length)
        env = np.sin(np.pi * k / length) ** 2
        rough = 1.0 + 0.5 * np.sin(2 * np.pi * rng.uniform(20.0, 40.0) * k / fs)
        x[start:start + length] += env * rough * _bandpass(rng.standard_normal(length), 100.0, 800.0, fs, order=2)
    return _normalize(x)


def other(rng, n, fs):
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / fs)
    f[0] = f[1]
    return _normalize(np.fft.irfft(spec / np.sqrt(f), n))


GENERATORS = {
    "wheeze": wheeze,
    "stridor": stridor,
    "cough": cough,
    "throat_clear": throat_clear,
    "other": other,
}


def make_record(label: str, spec: CorpusSpec, index: int) -> AudioRecord:
    class_id = list(GENERATORS).index(label)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([spec.seed, class_id, index])))
    n = int(round(spec.segment_seconds * spec.sample_rate))
    clean = GENERATORS[label](rng, n, spec.sample_rate)
    gain = 10 ** (rng.uniform(-GAIN_JITTER_DB, GAIN_JITTER_DB) / 20)
    clean = clean * BASE_RMS * CLASS_LEVEL[label] * gain
    noise_rms = np.sqrt(np.mean(clean * clean)) / 10 ** (spec.snr_db / 20)
    x = clean + noise_rms * rng.standard_normal(n)
    peak = np.max(np.abs(x))
    if peak > PEAK_LIMIT:
        x *= PEAK_LIMIT / peak
    return AudioRecord(x, spec.sample_rate, label, f"synth:{label}:{index}")


def generate(spec: CorpusSpec = CorpusSpec()) -> list[AudioRecord]:
    """Deterministically generate ``spec.counts[label]`` records per class."""
    return [
        make_record(label, spec, i)
        for label in GENERATORS
        if label in spec.counts
        for i in range(spec.counts[label])
    ]


def write_corpus(spec: CorpusSpec, out_dir) -> Path:
    """Write every record as 16-bit WAV plus ``manifest.csv``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for rec in generate(spec):
        _, label, index = rec.source_id.split(":")
        path = out / f"{label}_{int(index):04d}.wav"
        write_wav(path, rec)
        entries.append((path, label))
    manifest = out / "manifest.csv"
    write_manifest(manifest, entries, spec.segment_seconds)
    return manifest
