"""Pipeline configuration, the flat key=value config file, and the inert
training-hyperparameter records."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

__all__ = ["PipelineConfig", "ModelMetadata", "load_config", "parse_config_text",
           "CLASSIFIER_METADATA", "DETECTOR_METADATA"]


@dataclass
class PipelineConfig:
    """Thresholds, backend selection, queueing and service plumbing.

    Config file keys match these field names exactly.
    """

    gate_threshold: float = 0.5
    detector_conf_threshold: float = 0.25
    nms_iou_threshold: float = 0.45
    queue_capacity: int = 8
    ocr_language: str = "ben"
    ocr_timeout_ms: float = 2000.0
    classifier_backend: str = "mock"
    detector_backend: str = "mock"
    ocr_backend: str = "mock"
    record_dir: str = "recordings"
    source: str = ""
    store_path: str = "events.ndjson"
    head_spec: str = ""
    ocr_engine_cmd: str = "tesseract {input} {output_base} -l {language}"
    ocr_workers: int = 2
    bind_address: str = "127.0.0.1"
    port: int = 8080
    webhook_url: str = ""
    stream_format: str = "rgb24"
    decoder_cmd: str = ""

    def __post_init__(self):
        for name in ("gate_threshold", "detector_conf_threshold", "nms_iou_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(name, f"must be in [0, 1], got {value}")
        if self.queue_capacity < 1:
            raise ConfigError("queue_capacity", f"must be >= 1, got {self.queue_capacity}")
        if self.ocr_timeout_ms < 0:
            raise ConfigError("ocr_timeout_ms", f"must be >= 0, got {self.ocr_timeout_ms}")
        if self.stream_format not in ("rgb24", "yuv420p"):
            raise ConfigError("stream_format", f"unknown format {self.stream_format!r}")


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}


def parse_config_text(text: str, path: str = "<config>") -> PipelineConfig:
    """Parse flat `key = value` lines; unknown keys are rejected by name."""
    values: dict[str, object] = {}
    for line_no, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(stripped, f"{path}:{line_no}: expected 'key = value'")
        key, _, raw_value = stripped.partition("=")
        key = key.strip()
        raw_value = raw_value.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(key, f"{path}:{line_no}: unknown key")
        kind = _FIELD_TYPES[key]
        try:
            if kind in ("int", int):
                values[key] = int(raw_value)
            elif kind in ("float", float):
                values[key] = float(raw_value)
            else:
                values[key] = raw_value
        except ValueError:
            raise ConfigError(key, f"{path}:{line_no}: bad value {raw_value!r}") from None
    return PipelineConfig(**values)


def load_config(path) -> PipelineConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"), str(path))


@dataclass(frozen=True)
class ModelMetadata:
    """Inert record of training hyperparameters; never interpreted in-engine.

    `steps` is stored verbatim, its per-model semantics being unresolved.
    """

    model: str
    classes: int
    batch: int
    learning_rate: float
    max_batches: int
    steps: str
    width: int
    height: int
    filters: int
    subdivision: int | None = None


CLASSIFIER_METADATA = ModelMetadata(
    model="vehicle-classifier",
    classes=4,
    batch=32,
    learning_rate=0.0001,
    max_batches=100,
    steps="190, 90",
    width=96,
    height=96,
    filters=32,
)

DETECTOR_METADATA = ModelMetadata(
    model="plate-detector",
    classes=1,
    batch=64,
    subdivision=16,
    learning_rate=0.001,
    max_batches=3500,
    steps="4800, 5400",
    width=416,
    height=416,
    filters=18,
)
