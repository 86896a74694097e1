"""Two-level feature extraction.

Frame level: RMS, zero crossing rate, spectral centroid, bandwidth and flux
for every STFT frame. Window level: twelve texture statistics over a run of
consecutive frames, in the fixed order of ``FEATURE_NAMES``.

Spectral features use the one-sided spectrum (bins 0..N/2) with squared
power weighting; flux is normalized by ``fft_size - 1``.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from respsound.audio_io import AudioRecord
from respsound.dsp import FrameSpectrum, FramingConfig, frame_signal, power_spectra

FEATURE_NAMES = (
    "amrRMS", "rmrRMS", "meanRMS", "meanSC", "meanSB", "meanSF",
    "varRMS", "stdZCR", "mciZCR", "varSC", "varSB", "varSF",
)
FRAME_FEATURE_NAMES = ("rms", "zcr", "sc", "sb", "sf")


@dataclass(frozen=True)
class FrameFeatures:
    rms: float
    zcr: float
    sc: float
    sb: float
    sf: float
    degenerate: bool = False

    def as_tuple(self):
        return (self.rms, self.zcr, self.sc, self.sb, self.sf)


@dataclass(frozen=True)
class WindowFeatureVector:
    amrRMS: float
    rmrRMS: float
    meanRMS: float
    meanSC: float
    meanSB: float
    meanSF: float
    varRMS: float
    stdZCR: float
    mciZCR: float
    varSC: float
    varSB: float
    varSF: float
    window_index: int = 0
    degenerate: bool = False
    label: str | None = None

    def to_array(self, names: Sequence[str] = FEATURE_NAMES) -> np.ndarray:
        return np.array([getattr(self, n) for n in names], dtype=np.float64)

    def as_dict(self) -> dict[str, float]:
        return {n: getattr(self, n) for n in FEATURE_NAMES}

    @classmethod
    def from_array(cls, values, **extra) -> "WindowFeatureVector":
        values = [float(v) for v in values]
        if len(values) != len(FEATURE_NAMES):
            raise ValueError(f"expected {len(FEATURE_NAMES)} values, got {len(values)}")
        return cls(**dict(zip(FEATURE_NAMES, values)), **extra)


# ---------------------------------------------------------------- frame level

def rms(frame) -> float:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.size == 0:
        raise ValueError("rms of an empty frame")
    return float(np.sqrt(np.mean(frame * frame)))


def _zcr_rows(frames: np.ndarray) -> np.ndarray:
    # zeros inherit the sign of the previous nonzero sample in the same row
    s = np.sign(frames)
    idx = np.where(s != 0, np.arange(frames.shape[1]), 0)
    np.maximum.accumulate(idx, axis=1, out=idx)
    filled = np.take_along_axis(s, idx, axis=1)
    changes = np.count_nonzero(filled[:, 1:] * filled[:, :-1] < 0, axis=1)
    return changes / (frames.shape[1] - 1)


def zcr(frame) -> float:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 1 or frame.size < 2:
        raise ValueError("zcr needs a frame of at least 2 samples")
    return float(_zcr_rows(frame[None, :])[0])


def _power(spec) -> np.ndarray:
    return np.asarray(spec.power if isinstance(spec, FrameSpectrum) else spec, dtype=np.float64)


def _centroid_bandwidth(power: np.ndarray):
    """Row-wise (centroid, bandwidth, degenerate) for a 2-D power array."""
    peak = power.max(axis=1, keepdims=True)
    degenerate = peak[:, 0] <= 0
    scale = np.where(peak > 0, peak, 1.0)
    w = (power / scale) ** 2
    total = w.sum(axis=1)
    safe_total = np.where(degenerate, 1.0, total)
    k = np.arange(power.shape[1], dtype=np.float64)
    # row-wise sums rather than a BLAS product, so a frame's result does not
    # depend on how many other frames share the batch
    sc = (w * k).sum(axis=1) / safe_total
    dev = k[None, :] - sc[:, None]
    sb = np.sqrt((w * dev * dev).sum(axis=1) / safe_total)
    sc[degenerate] = 0.0
    sb[degenerate] = 0.0
    return sc, sb, degenerate


def spectral_centroid(spec) -> float:
    """Power-squared weighted mean bin; 0 for an all-zero spectrum."""
    sc, _, _ = _centroid_bandwidth(_power(spec)[None, :])
    return float(sc[0])


def spectral_bandwidth(spec) -> float:
    _, sb, _ = _centroid_bandwidth(_power(spec)[None, :])
    return float(sb[0])


def spectral_flux(curr, prev=None, fft_size: int | None = None) -> float:
    """Euclidean spectral change divided by ``fft_size - 1``.

    ``fft_size`` defaults to ``2 * (bins - 1)``. A missing previous frame
    gives 0.
    """
    p = _power(curr)
    if prev is None:
        return 0.0
    q = _power(prev)
    if p.shape != q.shape:
        raise ValueError(f"bin count mismatch: {p.shape[0]} vs {q.shape[0]}")
    n = fft_size if fft_size is not None else 2 * (p.shape[0] - 1)
    d = p - q
    return float(np.sqrt(np.dot(d, d)) / (n - 1))


def _flux_rows(power: np.ndarray, fft_size: int, prev: np.ndarray | None = None) -> np.ndarray:
    if power.shape[0] == 0:
        return np.zeros(0)
    if prev is None:
        d = np.diff(power, axis=0)
        head = np.zeros(1)
    else:
        d = np.diff(np.vstack([prev[None, :], power]), axis=0)
        head = np.zeros(0)
    flux = np.sqrt(np.einsum("ij,ij->i", d, d)) / (fft_size - 1)
    return np.concatenate([head, flux])


def frame_feature_matrix(
    frames: np.ndarray,
    power: np.ndarray,
    cfg: FramingConfig,
    prev_power: np.ndarray | None = None,
):
    """Compute the (n_frames, 5) matrix [rms, zcr, sc, sb, sf] plus degenerate flags.

    ``prev_power`` is the spectrum of the frame preceding ``frames[0]``; when
    absent the first frame's flux is 0.
    """
    n = frames.shape[0]
    out = np.empty((n, 5))
    if n == 0:
        return out, np.zeros(0, dtype=bool)
    out[:, 0] = np.sqrt(np.mean(frames * frames, axis=1))
    out[:, 1] = _zcr_rows(frames)
    out[:, 2], out[:, 3], degenerate = _centroid_bandwidth(power)
    out[:, 4] = _flux_rows(power, cfg.fft_size, prev_power)
    return out, degenerate


# ---------------------------------------------------------------- window level

def mean_crossing_irregularity(series) -> float:
    """Coefficient of variation of the gaps between mean crossings of ``series``."""
    x = np.asarray(series, dtype=np.float64)
    if x.size < 2:
        raise ValueError("series must have at least 2 values")
    dev = x - x.mean()
    crossings = np.flatnonzero(dev[:-1] * dev[1:] < 0)
    if crossings.size < 2:
        return 0.0
    gaps = np.diff(crossings).astype(np.float64)
    return float(gaps.std() / gaps.mean())


def _as_matrix(frames) -> np.ndarray:
    if isinstance(frames, np.ndarray):
        m = np.asarray(frames, dtype=np.float64)
    else:
        m = np.array([f.as_tuple() if isinstance(f, FrameFeatures) else f for f in frames], dtype=np.float64)
    if m.ndim != 2 or m.shape[1] != 5:
        raise ValueError("frame features must form an (n, 5) matrix")
    return m


def _pvar(x: np.ndarray) -> float:
    # a constant series must give exactly zero, not rounding residue
    if x.max() == x.min():
        return 0.0
    return float(x.var())


def window_features(frames, global_max_rms: float, window_index: int = 0, label=None) -> WindowFeatureVector:
    """Aggregate a window of frame features into the twelve texture statistics.

    ``frames`` is a sequence of ``FrameFeatures`` or an (n, 5) array in
    ``FRAME_FEATURE_NAMES`` order. Variances are population variances.
    """
    m = _as_matrix(frames)
    if m.shape[0] < 2:
        raise ValueError(f"a window needs at least 2 frames, got {m.shape[0]}")
    if global_max_rms < 0:
        raise ValueError("global_max_rms must be non-negative")
    r, z, sc, sb, sf = m.T
    degenerate = False
    mean_rms = r.mean()
    max_rms = r.max()
    if mean_rms > 0:
        amr = max_rms / mean_rms
    else:
        amr, degenerate = 0.0, True
    if global_max_rms > 0:
        rmr = max_rms / global_max_rms
    else:
        rmr, degenerate = 0.0, True
    return WindowFeatureVector(
        amrRMS=float(amr),
        rmrRMS=float(rmr),
        meanRMS=float(mean_rms),
        meanSC=float(sc.mean()),
        meanSB=float(sb.mean()),
        meanSF=float(sf.mean()),
        varRMS=_pvar(r),
        stdZCR=float(np.sqrt(_pvar(z))),
        mciZCR=mean_crossing_irregularity(z),
        varSC=_pvar(sc),
        varSB=_pvar(sb),
        varSF=_pvar(sf),
        window_index=window_index,
        degenerate=degenerate,
        label=label,
    )


def record_frame_features(record: AudioRecord, cfg: FramingConfig = FramingConfig()):
    frames = frame_signal(record, cfg)
    return frame_feature_matrix(frames, power_spectra(frames, cfg), cfg)


def group_windows(
    frame_matrix: np.ndarray,
    frame_degenerate: np.ndarray,
    per_window: int,
    rms_reference: str = "record",
    label=None,
) -> list[WindowFeatureVector]:
    """Cut a frame-feature matrix into consecutive windows of ``per_window`` frames.

    ``rms_reference="record"`` normalizes rmrRMS by the loudest frame of the
    whole record; ``"running"`` uses the loudest frame seen up to the end of
    each window, which is what a causal stream can know.
    """
    if rms_reference not in ("record", "running"):
        raise ValueError(f"unknown rms_reference {rms_reference!r}")
    n_windows = frame_matrix.shape[0] // per_window
    out = []
    record_max = float(frame_matrix[:, 0].max()) if frame_matrix.shape[0] else 0.0
    for j in range(n_windows):
        stop = (j + 1) * per_window
        ref = record_max if rms_reference == "record" else float(frame_matrix[:stop, 0].max())
        vec = window_features(frame_matrix[j * per_window:stop], ref, window_index=j, label=label)
        if frame_degenerate[j * per_window:stop].all() and not vec.degenerate:
            vec = mark_degenerate(vec)
        out.append(vec)
    return out


def mark_degenerate(vec: WindowFeatureVector) -> WindowFeatureVector:
    d = asdict(vec)
    d["degenerate"] = True
    return WindowFeatureVector(**d)


def extract(
    record: AudioRecord,
    cfg: FramingConfig = FramingConfig(),
    window_seconds: float = 5.0,
    rms_reference: str = "record",
) -> list[WindowFeatureVector]:
    """Frame a record and emit one feature vector per complete analysis window.

    A window holds as many frames as fit in ``window_seconds`` of audio, so a
    record cut to exactly ``window_seconds`` yields exactly one vector.
    """
    per_window = cfg.frames_per_window(window_seconds)
    if per_window < 2:
        raise ValueError(f"window of {window_seconds} s holds fewer than 2 frames")
    n_frames = cfg.frame_count(len(record))
    if n_frames < per_window:
        raise ValueError(
            f"record of {len(record)} samples is shorter than one {window_seconds} s window"
        )
    matrix, degenerate = record_frame_features(record, cfg)
    return group_windows(matrix, degenerate, per_window, rms_reference, label=record.label)


# ---------------------------------------------------------------- CSV

def write_feature_csv(path, vectors: Iterable[WindowFeatureVector]) -> None:
    with open(Path(path), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*FEATURE_NAMES, "label"])
        for v in vectors:
            writer.writerow([repr(float(getattr(v, n))) for n in FEATURE_NAMES] + [v.label or ""])

