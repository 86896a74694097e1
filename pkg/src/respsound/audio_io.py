"""Audio ingestion: WAV I/O, resampling to the pipeline rate, segmentation, manifests."""

from __future__ import annotations

import csv
import logging
import wave
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import signal

from respsound.errors import ManifestError, UnsupportedEncodingError, WavFormatError

log = logging.getLogger(__name__)

PIPELINE_RATE = 8000
CLASS_LABELS = ("wheeze", "stridor", "cough", "throat_clear", "other")


@dataclass(frozen=True)
class AudioRecord:
    samples: np.ndarray
    sample_rate: int
    label: str | None = None
    source_id: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if samples.size and np.max(np.abs(samples)) > 1.0:
            raise ValueError("samples must lie in [-1, 1]")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self) -> int:
        return len(self.samples)


def _decode_pcm(raw: bytes, sampwidth: int, channels: int) -> np.ndarray:
    if sampwidth == 1:
        data = (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    else:
        data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if channels > 1:
        data = data[: len(data) - len(data) % channels].reshape(-1, channels).mean(axis=1)
    return data


def read_wav_stream(fp, source_id: str = "") -> AudioRecord:
    """Decode an open binary file object holding a PCM WAV."""
    try:
        with wave.open(fp, "rb") as wf:
            channels = wf.getnchannels()
            sampwidth = wf.getsampwidth()
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        if str(exc).startswith("unknown format"):
            raise UnsupportedEncodingError(f"{source_id}: {exc}") from exc
        raise WavFormatError(f"{source_id}: {exc}") from exc
    except EOFError as exc:
        raise WavFormatError(f"{source_id}: truncated header") from exc
    if sampwidth not in (1, 2):
        raise UnsupportedEncodingError(
            f"{source_id}: {8 * sampwidth}-bit PCM not supported (8 or 16 only)"
        )
    if rate <= 0 or channels <= 0:
        raise WavFormatError(f"{source_id}: invalid header (rate={rate}, channels={channels})")
    return AudioRecord(_decode_pcm(raw, sampwidth, channels), rate, source_id=source_id)


def load_wav(path, label: str | None = None) -> AudioRecord:
    """Load an 8/16-bit PCM WAV as a mono record normalized to [-1, 1].

    Stereo input is downmixed by averaging channels. A missing file raises
    ``FileNotFoundError``; a broken header raises ``WavFormatError``; float
    or compressed encodings raise ``UnsupportedEncodingError``.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such WAV file: {path}")
    with open(path, "rb") as fp:
        rec = read_wav_stream(fp, source_id=str(path))
    return replace(rec, label=label) if label is not None else rec


def write_wav(path, record: AudioRecord, sampwidth: int = 2) -> None:
    if sampwidth == 2:
        q = np.clip(np.round(record.samples * 32768.0), -32768, 32767).astype("<i2")
    elif sampwidth == 1:
        q = np.clip(np.round(record.samples * 128.0) + 128, 0, 255).astype(np.uint8)
    else:
        raise UnsupportedEncodingError("only 8/16-bit PCM output is supported")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(sampwidth)
        wf.setframerate(record.sample_rate)
        wf.writeframes(q.tobytes())


def resample(record: AudioRecord, target_rate: int = PIPELINE_RATE) -> AudioRecord:
    """Polyphase windowed-sinc resampling.

    The anti-alias cutoff sits at 0.45 x the lower of the two rates, so every
    tone below 90% of the output Nyquist passes. Output length is
    ``round(n * target / source)``.
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if record.sample_rate == target_rate:
        return record
    ratio = Fraction(target_rate, record.sample_rate)
    up, down = ratio.numerator, ratio.denominator
    n_out = int(round(len(record) * target_rate / record.sample_rate))
    if len(record) == 0:
        return replace(record, samples=np.zeros(0), sample_rate=target_rate)
    factor = max(up, down)
    taps = signal.firwin(20 * factor + 1, 0.9 / factor, window=("kaiser", 8.0))
    out = signal.resample_poly(record.samples, up, down, window=taps)
    if len(out) < n_out:
        out = np.pad(out, (0, n_out - len(out)))
    out = np.clip(out[:n_out], -1.0, 1.0)
    return replace(record, samples=out, sample_rate=target_rate)


def segment(record: AudioRecord, seconds: float) -> list[AudioRecord]:
    """Split into consecutive non-overlapping segments; the short tail is dropped."""
    if seconds <= 0:
        raise ValueError(f"segment length must be positive, got {seconds}")
    if record.sample_rate != PIPELINE_RATE:
        log.warning("segmenting %s at %d Hz, not the pipeline rate", record.source_id, record.sample_rate)
    seg_len = int(round(seconds * record.sample_rate))
    count = len(record) // seg_len
    remainder = len(record) - count * seg_len
    if remainder:
        log.warning(
            "%s: discarding %d trailing samples (shorter than one %.3g s segment)",
            record.source_id or "record", remainder, seconds,
        )
    return [
        AudioRecord(
            record.samples[i * seg_len:(i + 1) * seg_len],
            record.sample_rate,
            record.label,
            f"{record.source_id}#{i}",
        )
        for i in range(count)
    ]


@dataclass
class DatasetManifest:
    entries: list[tuple[Path, str]]
    segment_seconds: float = 5.0
    label_catalog: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.segment_seconds <= 0:
            raise ManifestError("segment_seconds must be positive")
        if not self.label_catalog:
            self.label_catalog = list(dict.fromkeys(label for _, label in self.entries))
        unknown = {label for _, label in self.entries} - set(self.label_catalog)
        if unknown:
            raise ManifestError(f"labels missing from catalog: {sorted(unknown)}")


MANIFEST_FIELDS = ("segment_seconds",)


def load_manifest(path) -> DatasetManifest:
    """Parse a ``path,label`` CSV manifest.

    Lines starting with ``#`` are comments, except ``#!key=value`` directives;
    the only known key is ``segment_seconds`` (default 5.0). Relative paths
    resolve against the manifest's directory.
    """
    path = Path(path)
    base = path.parent
    segment_seconds = 5.0
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        lines = []
        for line in fh:
            stripped = line.strip()
            if stripped.startswith("#!"):
                key, _, value = stripped[2:].partition("=")
                key = key.strip()
                if key not in MANIFEST_FIELDS:
                    raise ManifestError(f"{path}: unknown manifest field {key!r}")
                try:
                    segment_seconds = float(value)
                except ValueError:
                    raise ManifestError(f"{path}: bad segment_seconds {value!r}") from None
                if segment_seconds <= 0:
                    raise ManifestError(f"{path}: segment_seconds must be positive")
            elif stripped and not stripped.startswith("#"):
                lines.append(line)
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["path", "label"]:
        if header is None:
            raise ManifestError(f"{path}: no entries")
        raise ManifestError(f"{path}: expected header 'path,label', got {header}")
    seen = set()
    for row in reader:
        if len(row) != 2:
            raise ManifestError(f"{path}: malformed row {row}")
        file_path = (base / row[0].strip()).resolve()
        if file_path in seen:
            raise ManifestError(f"{path}: duplicate path {row[0].strip()}")
        seen.add(file_path)
        if not file_path.is_file():
            raise ManifestError(f"{path}: referenced file not found: {row[0].strip()}")
        rows.append((file_path, row[1].strip()))
    if not rows:
        raise ManifestError(f"{path}: no entries")
    return DatasetManifest(rows, segment_seconds)


def write_manifest(path, entries, segment_seconds: float = 5.0) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"#!segment_seconds={segment_seconds}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "label"])
        for file_path, label in entries:
            p = Path(file_path)
            try:
                p = p.relative_to(path.parent)
            except ValueError:
                pass
            writer.writerow([p.as_posix(), label])


def load_dataset_records(manifest: DatasetManifest, rate: int = PIPELINE_RATE) -> list[AudioRecord]:
    """Load every manifest entry, resample to ``rate`` and cut into labeled segments."""
    out = []
    for file_path, label in manifest.entries:
        rec = resample(load_wav(file_path, label=label), rate)
        out.extend(segment(rec, manifest.segment_seconds))
    return out
