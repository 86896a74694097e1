"""Respiratory sound classification: features, models, and real-time symptom logging."""

from respsound.audio_io import AudioRecord, load_wav, resample, segment
from respsound.dsp import FramingConfig
from respsound.features import FEATURE_NAMES, WindowFeatureVector, extract

__version__ = "0.1.0"

__all__ = [
    "AudioRecord",
    "FEATURE_NAMES",
    "FramingConfig",
    "WindowFeatureVector",
    "extract",
    "load_wav",
    "resample",
    "segment",
]
