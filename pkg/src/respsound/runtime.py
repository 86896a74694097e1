"""Real-time pipeline: streaming classification, the symptom event store,
daily summaries and per-stage latency benchmarks."""

from __future__ import annotations

import csv
import io
import logging
import os
import queue
import threading
import time
from dataclasses import dataclass, field
from datetime import date as Date
from datetime import datetime, timedelta
from datetime import time as Time
from pathlib import Path
from typing import Iterator, Protocol

import numpy as np

from respsound.audio_io import PIPELINE_RATE, AudioRecord, load_wav, read_wav_stream, resample
from respsound.dsp import FramingConfig, frame_samples, frame_signal, power_spectra
from respsound.errors import DataError, MissingFeatureError, StreamOverrun
from respsound.features import (
    FEATURE_NAMES,
    WindowFeatureVector,
    mark_degenerate,
    frame_feature_matrix,
    group_windows,
    window_features,
)
from respsound.models import Prediction, TrainedModel, predict

log = logging.getLogger(__name__)

DEFAULT_GATE = 1e-4


# ---------------------------------------------------------------- sources

class SampleSource(Protocol):
    def read(self) -> np.ndarray | None:
        """Next chunk of samples; empty when nothing is available yet, None at end of stream."""


class ArraySource:
    """Serve a fixed sample array in ``chunk`` sized pieces."""

    def __init__(self, samples, chunk: int = 1024):
        self.samples = np.asarray(samples, dtype=np.float64)
        self.chunk = chunk
        self.pos = 0

    def read(self):
        if self.pos >= len(self.samples):
            return None
        out = self.samples[self.pos:self.pos + self.chunk]
        self.pos += len(out)
        return out


class WavSource(ArraySource):
    """File-backed source; resamples to the pipeline rate on open."""

    def __init__(self, path_or_file, chunk: int = 1024, rate: int = PIPELINE_RATE):
        if hasattr(path_or_file, "read"):
            rec = read_wav_stream(path_or_file, source_id="<stdin>")
        else:
            rec = load_wav(path_or_file)
        super().__init__(resample(rec, rate).samples, chunk)


class ThreadedSource:
    """Decouple a producer from the pipeline through a bounded chunk queue.

    The producer thread pulls from ``inner`` and never blocks on a full
    queue: if the consumer falls behind by more than ``capacity`` chunks the
    overrun is recorded and the next ``read`` raises ``StreamOverrun``.
    """

    def __init__(self, inner: SampleSource, capacity: int = 64):
        self._queue: queue.Queue = queue.Queue(maxsize=capacity)
        self._overrun = threading.Event()
        self._thread = threading.Thread(target=self._produce, args=(inner,), daemon=True)
        self._thread.start()

    def _produce(self, inner):
        while True:
            chunk = inner.read()
            if chunk is not None and len(chunk) == 0:
                time.sleep(0.001)
                continue
            try:
                self._queue.put_nowait(chunk)
            except queue.Full:
                self._overrun.set()
                return
            if chunk is None:
                return

    def read(self):
        if self._overrun.is_set() and self._queue.empty():
            raise StreamOverrun("frame queue overrun: consumer fell behind the sample source")
        try:
            return self._queue.get(timeout=0.01)
        except queue.Empty:
            if self._overrun.is_set():
                raise StreamOverrun("frame queue overrun: consumer fell behind the sample source") from None
            return np.zeros(0)


@dataclass(frozen=True)
class ContextReading:
    at_seconds: float
    activity_level: str | None = None
    relative_humidity: float | None = None
    temperature_c: float | None = None


class ContextSource:
    """Context readings ordered by time; ``latest(t)`` is last-value-carried-forward."""

    def __init__(self, readings=()):
        self.readings = sorted(readings, key=lambda r: r.at_seconds)
        self._times = [r.at_seconds for r in self.readings]

    def latest(self, at_seconds: float) -> ContextReading | None:
        i = int(np.searchsorted(self._times, at_seconds, side="right"))
        return self.readings[i - 1] if i else None

    @classmethod
    def from_csv(cls, path) -> "ContextSource":
        """CSV with header ``seconds,activity,humidity,temperature_c``; blank cells are null."""
        out = []
        with open(path, encoding="utf-8", newline="") as fh:
            for row in csv.DictReader(fh):
                def num(key):
                    v = (row.get(key) or "").strip()
                    return float(v) if v else None
                out.append(ContextReading(
                    float(row["seconds"]),
                    (row.get("activity") or "").strip() or None,
                    num("humidity"),
                    num("temperature_c"),
                ))
        return cls(out)


# ---------------------------------------------------------------- events

@dataclass
class SymptomEvent:
    sound_detected: str | None
    activity_level: str | None
    relative_humidity: float | None
    temperature_c: float | None
    event_time: Time
    date: Date
    id: int | None = None


@dataclass
class Detection:
    window_index: int
    features: WindowFeatureVector
    prediction: Prediction | None
    event: SymptomEvent


class StreamingExtractor:
    """Incremental twin of ``features.extract`` with ``rms_reference="running"``.

    Frames are cut on the same global grid as the batch path and spectral flux
    is chained across chunk boundaries, so each emitted window is identical
    to the corresponding batch window.
    """

    def __init__(self, cfg: FramingConfig = FramingConfig(), window_seconds: float = 5.0):
        self.cfg = cfg
        self.per_window = cfg.frames_per_window(window_seconds)
        if self.per_window < 2:
            raise ValueError(f"window of {window_seconds} s holds fewer than 2 frames")
        self._buf = np.zeros(0)
        self._prev_power = None
        self._pending = np.zeros((0, 5))
        self._pending_degenerate = np.zeros(0, dtype=bool)
        self._running_max = 0.0
        self.frames_done = 0
        self.windows_done = 0

    def push(self, chunk) -> list[WindowFeatureVector]:
        cfg = self.cfg
        self._buf = np.concatenate([self._buf, np.asarray(chunk, dtype=np.float64)])
        frames = frame_samples(self._buf, cfg)
        out = []
        if len(frames):
            power = power_spectra(frames, cfg)
            feats, degenerate = frame_feature_matrix(frames, power, cfg, self._prev_power)
            self._prev_power = power[-1]
            self._buf = self._buf[len(frames) * cfg.hop:]
            self.frames_done += len(frames)
            self._pending = np.vstack([self._pending, feats])
            self._pending_degenerate = np.concatenate([self._pending_degenerate, degenerate])
        while len(self._pending) >= self.per_window:
            block = self._pending[:self.per_window]
            self._running_max = max(self._running_max, float(block[:, 0].max()))
            vec = window_features(block, self._running_max, window_index=self.windows_done)
            if self._pending_degenerate[:self.per_window].all() and not vec.degenerate:
                vec = mark_degenerate(vec)
            out.append(vec)
            self._pending = self._pending[self.per_window:]
            self._pending_degenerate = self._pending_degenerate[self.per_window:]
            self.windows_done += 1
        return out

    def window_end_sample(self, window_index: int) -> int:
        last_frame = (window_index + 1) * self.per_window - 1
        return last_frame * self.cfg.hop + self.cfg.frame_len


class StreamClassifier:
    """Pull samples, extract windows, gate on energy, classify, emit events.

    A window whose meanRMS is below ``gate`` (or that is degenerate) yields
    an event with ``sound_detected=None``. Each event is stamped at the
    window's last sample relative to ``start`` and carries the most recent
    context reading. If the source delivers nothing for ``timeout`` seconds
    the stream ends and ``diagnostic`` says why.
    """

    def __init__(
        self,
        source: SampleSource,
        model: TrainedModel,
        context: ContextSource | None = None,
        gate: float = DEFAULT_GATE,
        start: datetime | None = None,
        cfg: FramingConfig = FramingConfig(),
        window_seconds: float = 5.0,
        timeout: float = 5.0,
    ):
        if gate < 0:
            raise ValueError("gate must be non-negative")
        missing = [n for n in model.feature_names if n not in FEATURE_NAMES]
        if missing:
            raise MissingFeatureError(missing)
        self.source = source
        self.model = model
        self.context = context
        self.gate = gate
        self.start = start or datetime.now().replace(microsecond=0)
        self.extractor = StreamingExtractor(cfg, window_seconds)
        self.timeout = timeout
        self.diagnostic: str | None = None

    def _event(self, vec: WindowFeatureVector) -> Detection:
        end_s = self.extractor.window_end_sample(vec.window_index) / self.extractor.cfg.sample_rate
        # stamps have whole-second resolution; round rather than truncate
        stamp = (self.start + timedelta(seconds=end_s, microseconds=500_000)).replace(microsecond=0)
        prediction = None
        if not vec.degenerate and vec.meanRMS >= self.gate and vec.meanRMS > 0:
            prediction = predict(self.model, vec)
        ctx = self.context.latest(end_s) if self.context else None
        event = SymptomEvent(
            sound_detected=prediction.label if prediction else None,
            activity_level=ctx.activity_level if ctx else None,
            relative_humidity=ctx.relative_humidity if ctx else None,
            temperature_c=ctx.temperature_c if ctx else None,
            event_time=stamp.time(),
            date=stamp.date(),
        )
        return Detection(vec.window_index, vec, prediction, event)

    def run(self) -> Iterator[Detection]:
        idle_since = None
        while True:
            chunk = self.source.read()
            if chunk is None:
                return
            if len(chunk) == 0:
                now = time.monotonic()
                idle_since = idle_since or now
                if now - idle_since > self.timeout:
                    self.diagnostic = f"source underrun: no samples for {self.timeout:g} s"
                    log.warning(self.diagnostic)
                    return
                time.sleep(0.001)
                continue
            idle_since = None
            for vec in self.extractor.push(chunk):
                yield self._event(vec)


def stream_classify(source, model, context=None, gate: float = DEFAULT_GATE, **kwargs) -> Iterator[SymptomEvent]:
    for detection in StreamClassifier(source, model, context, gate, **kwargs).run():
        yield detection.event


# ---------------------------------------------------------------- event store
#
# One event per line, UTF-8, fields separated by "|":
#   id|sound|activity|humidity|temp_c|HH:MM:SS|YYYY-MM-DD
# "\N" is null. Inside text fields "\" is written "\\", "|" is "\|" and a
# newline is "\n". Floats are written with repr() so they reload exactly.
# Lines starting with "#" are metadata; "#seed=N" makes the first id N+1.

NULL = "\\N"


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace("|", "\\|").replace("\n", "\\n")


def _split_fields(line: str) -> list[str | None]:
    raw, cur, i = [], [], 0
    while i < len(line):
        ch = line[i]
        if ch == "\\" and i + 1 < len(line):
            cur.append(line[i:i + 2])
            i += 2
            continue
        if ch == "|":
            raw.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
        i += 1
    raw.append("".join(cur))
    return [None if f == NULL else _unescape(f) for f in raw]


def _unescape(text: str) -> str:
    out, i = [], 0
    while i < len(text):
        if text[i] == "\\" and i + 1 < len(text):
            out.append({"n": "\n"}.get(text[i + 1], text[i + 1]))
            i += 2
        else:
            out.append(text[i])
            i += 1
    return "".join(out)


def format_event(event: SymptomEvent) -> str:
    def text(v):
        return NULL if v is None else _escape(str(v))

    def num(v):
        return NULL if v is None else repr(float(v))

    return "|".join([
        str(event.id),
        text(event.sound_detected),
        text(event.activity_level),
        num(event.relative_humidity),
        num(event.temperature_c),
        event.event_time.strftime("%H:%M:%S"),
        event.date.isoformat(),
    ])


def parse_event(line: str) -> SymptomEvent:
    parts = _split_fields(line)
    if len(parts) != 7:
        raise DataError(f"event line has {len(parts)} fields, expected 7: {line!r}")
    ident, sound, activity, humidity, temp, when, day = parts
    return SymptomEvent(
        sound_detected=sound,
        activity_level=activity,
        relative_humidity=None if humidity is None else float(humidity),
        temperature_c=None if temp is None else float(temp),
        event_time=Time.fromisoformat(when),
        date=Date.fromisoformat(day),
        id=int(ident),
    )


class EventStore:
    """Append-only event log with one writer; every append is fsynced before returning."""

    def __init__(self, path, seed_id: int | None = None):
        self.path = Path(path)
        self._lock = threading.Lock()
        events, seed = self._scan()
        if seed is None and seed_id is not None and not events:
            with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
                fh.write(f"#seed={int(seed_id)}\n")
                fh.flush()
                os.fsync(fh.fileno())
            seed = int(seed_id)
        self._last_id = max([e.id for e in events] + [seed or 0])

    def _scan(self):
        events, seed = [], None
        if not self.path.exists():
            return events, seed
        with open(self.path, encoding="utf-8", newline="\n") as fh:
            for line in fh:
                if not line.endswith("\n"):
                    break  # torn tail from an in-progress write
                line = line[:-1]
                if line.startswith("#seed="):
                    seed = int(line[6:])
                elif line and not line.startswith("#"):
                    events.append(parse_event(line))
        return events, seed

    def events(self) -> list[SymptomEvent]:
        return self._scan()[0]

    def append(self, event: SymptomEvent) -> int:
        with self._lock:
            new_id = self._last_id + 1
            record = SymptomEvent(**{**event.__dict__, "id": new_id})
            with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
                fh.write(format_event(record) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            self._last_id = new_id
            event.id = new_id
            return new_id

    @property
    def last_id(self) -> int:
        return self._last_id


def append_event(store: EventStore, event: SymptomEvent) -> int:
    return store.append(event)


# ---------------------------------------------------------------- daily summary

PERIODS = (("night", 0), ("morning", 6), ("afternoon", 12), ("evening", 18))


def period_of(t: Time) -> str:
    name = PERIODS[0][0]
    for label, start_hour in PERIODS:
        if t.hour >= start_hour:
            name = label
    return name


@dataclass
class DailySummary:
    date: Date
    counts: dict[str, dict[str, int]] = field(default_factory=lambda: {p: {} for p, _ in PERIODS})

    @property
    def total(self) -> int:
        return sum(sum(c.values()) for c in self.counts.values())

    def symptoms(self) -> list[str]:
        seen = {}
        for per in self.counts.values():
            for s in per:
                seen.setdefault(s, None)
        return sorted(seen)

    def to_text(self) -> str:
        symptoms = self.symptoms()
        lines = [f"Daily summary for {self.date.isoformat()}"]
        if not symptoms:
            lines.append("no symptoms recorded")
            return "\n".join(lines)
        w = max(len("Period"), *(len(p) for p, _ in PERIODS))
        cw = max(5, *(len(s) for s in symptoms))
        lines.append(f"{'Period':<{w}}" + "".join(f"  {s:>{cw}}" for s in symptoms) + f"  {'Total':>{cw}}")
        for p, _ in PERIODS:
            row = self.counts[p]
            lines.append(
                f"{p:<{w}}" + "".join(f"  {row.get(s, 0):>{cw}d}" for s in symptoms)
                + f"  {sum(row.values()):>{cw}d}"
            )
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["date", "period", "symptom", "count"])
        for p, _ in PERIODS:
            for s in sorted(self.counts[p]):
                w.writerow([self.date.isoformat(), p, s, self.counts[p][s]])
        return buf.getvalue()


def daily_report(store: EventStore, day: Date) -> DailySummary:
    """Count non-null detections on ``day`` by period (half-open 6-hour buckets) and symptom."""
    summary = DailySummary(day)
    for e in store.events():
        if e.date != day or e.sound_detected is None:
            continue
        bucket = summary.counts[period_of(e.event_time)]
        bucket[e.sound_detected] = bucket.get(e.sound_detected, 0) + 1
    return summary


# ---------------------------------------------------------------- benchmark

STAGES = ("Pre-processing", "Feature Extraction", "Classification")


@dataclass
class StageTimings:
    durations: dict[str, list[float]] = field(default_factory=lambda: {s: [] for s in STAGES})
    windows: int = 0

    def mean(self, stage: str) -> float:
        return float(np.mean(self.durations[stage]))

    def max(self, stage: str) -> float:
        return float(np.max(self.durations[stage]))

    @property
    def total_mean(self) -> float:
        return sum(self.mean(s) for s in STAGES)

    def report(self) -> str:
        w = max(len(s) for s in STAGES + ("Total",))
        lines = [
            f"{'Module':<{w}}  {'Response Time (ms)':>18}",
            f"{'':<{w}}  {'mean':>8}  {'max':>8}",
        ]
        for s in STAGES:
            lines.append(f"{s:<{w}}  {1000 * self.mean(s):8.3f}  {1000 * self.max(s):8.3f}")
        lines.append(f"{'Total':<{w}}  {1000 * self.total_mean:8.3f}")
        lines.append(f"({self.windows} window(s) per run, {len(self.durations[STAGES[0]])} run(s); times per window)")
        return "\n".join(lines)


def bench_pipeline(
    record: AudioRecord,
    model: TrainedModel,
    repetitions: int = 10,
    cfg: FramingConfig = FramingConfig(),
    window_seconds: float = 5.0,
) -> StageTimings:
    """Time framing+FFT, feature extraction and classification separately, per window."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if record.sample_rate != cfg.sample_rate:
        record = resample(record, cfg.sample_rate)
    per_window = cfg.frames_per_window(window_seconds)
    timings = StageTimings()
    clock = time.perf_counter
    for _ in range(repetitions):
        t0 = clock()
        frames = frame_signal(record, cfg)
        power = power_spectra(frames, cfg)
        t1 = clock()
        feats, degenerate = frame_feature_matrix(frames, power, cfg)
        vectors = group_windows(feats, degenerate, per_window)
        t2 = clock()
        if not vectors:
            raise DataError("record is shorter than one analysis window")
        for v in vectors:
            predict(model, v)
        t3 = clock()
        n = len(vectors)
        timings.windows = n
        timings.durations["Pre-processing"].append((t1 - t0) / n)
        timings.durations["Feature Extraction"].append((t2 - t1) / n)
        timings.durations["Classification"].append((t3 - t2) / n)
    return timings
