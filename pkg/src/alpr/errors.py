"""Exception types shared across the engine."""

from __future__ import annotations


class AlprError(Exception):
    """Base class for all engine errors."""


class ShapeMismatch(AlprError):
    """Raw detector tensor does not match the head layout."""


class ChannelMismatch(AlprError):
    """Image has the wrong channel count for the operation."""


class DegenerateHistogram(AlprError):
    """Histogram has fewer than two distinct intensities; no threshold exists."""


class OutOfBounds(AlprError):
    """Rect exceeds the image it is applied to."""


class MalformedLine(AlprError):
    """A line of an annotation or NDJSON file could not be parsed."""

    def __init__(self, path: str, line_no: int, text: str, reason: str = ""):
        self.path = str(path)
        self.line_no = line_no
        self.text = text
        self.reason = reason
        detail = f": {reason}" if reason else ""
        super().__init__(f"{self.path}:{line_no}: malformed line {text!r}{detail}")


class EngineNotFound(AlprError):
    """The external OCR engine binary is absent or not executable."""


class EngineCrashed(AlprError):
    """The external OCR engine exited non-zero; diagnostics attached."""

    def __init__(self, returncode: int, stderr: str):
        self.returncode = returncode
        self.stderr = stderr
        super().__init__(f"ocr engine exited {returncode}: {stderr.strip()[:400]}")


class EmptyGroundTruth(AlprError):
    """Ground-truth text for an accuracy computation is empty."""


class BackendFailure(AlprError):
    """A pipeline backend failed; carries the stage tag and frame index."""

    def __init__(self, stage: str, frame_index: int, cause: BaseException | str):
        self.stage = stage
        self.frame_index = frame_index
        self.cause = cause
        super().__init__(f"{stage} backend failed on frame {frame_index}: {cause}")


class CorruptRecord(AlprError):
    """A non-final store log line failed to parse."""

    def __init__(self, line_no: int, reason: str = ""):
        self.line_no = line_no
        detail = f": {reason}" if reason else ""
        super().__init__(f"corrupt record at line {line_no}{detail}")


class IoFailure(AlprError):
    """Underlying I/O failed while appending to the store."""


class ConfigError(AlprError):
    """Config file contains an unknown key or an invalid value."""

    def __init__(self, key: str, reason: str = ""):
        self.key = key
        detail = f": {reason}" if reason else ""
        super().__init__(f"bad config key {key!r}{detail}")


class SourceUnavailable(AlprError):
    """The configured frame source cannot be opened."""
