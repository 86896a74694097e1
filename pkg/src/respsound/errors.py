"""Exception hierarchy.

``DataError`` covers bad inputs (malformed files, invalid datasets, model
mismatches). Plain ``OSError`` is left alone for I/O failures so callers can
tell the two apart; the CLI maps them to different exit codes.
"""


class DataError(ValueError):
    """Input data or model content is invalid."""


class WavFormatError(DataError):
    """WAV header is malformed or truncated."""


class UnsupportedEncodingError(DataError):
    """WAV file uses an encoding other than 8/16-bit integer PCM."""


class ManifestError(DataError):
    pass


class ModelFormatError(DataError):
    """Model file failed its version or integrity check."""


class ChecksumError(ModelFormatError):
    pass


class VersionError(ModelFormatError):
    pass


class MissingFeatureError(DataError):
    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__("missing features: " + ", ".join(self.missing))


class StreamOverrun(RuntimeError):
    """Producer filled the frame queue faster than the consumer drained it."""
