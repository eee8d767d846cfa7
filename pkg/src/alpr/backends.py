"""Backend contracts for the three inference stages, deterministic mocks,
and construction from config ids."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .config import PipelineConfig
from .errors import ConfigError
from .geometry import BBox, DetectorHeadSpec, load_head_spec
from .imaging import ImageBuf
from .ocr import ExternalOcrEngine, ManifestOcrEngine, MockOcrEngine, OcrResult, PlatePrepared

__all__ = [
    "VehicleClassifier",
    "PlateDetector",
    "OcrEngine",
    "Backends",
    "MockClassifier",
    "MockDetector",
    "TensorMockDetector",
    "build_backends",
]


@runtime_checkable
class VehicleClassifier(Protocol):
    def classify(self, image: ImageBuf) -> Sequence[float]:
        """96x96x3 frame -> 4 class scores in [0, 1], order bus/car/motorbike/truck."""
        ...


@runtime_checkable
class PlateDetector(Protocol):
    def detect(self, image: ImageBuf) -> "list[BBox] | np.ndarray":
        """416x416x3 letterboxed frame -> decoded boxes, or a raw head tensor."""
        ...


@runtime_checkable
class OcrEngine(Protocol):
    def recognize(self, prepared: PlatePrepared) -> OcrResult:
        ...


@dataclass
class Backends:
    classifier: VehicleClassifier
    detector: PlateDetector
    ocr: OcrEngine
    head_spec: DetectorHeadSpec | None = None


class MockClassifier:
    """Returns fixed scores regardless of content."""

    def __init__(self, scores: Sequence[float] = (0.9, 0.05, 0.03, 0.02)):
        self.scores = tuple(float(s) for s in scores)

    def classify(self, image: ImageBuf) -> Sequence[float]:
        return self.scores


class MockDetector:
    """Returns a fixed box list regardless of content."""

    def __init__(self, boxes: Sequence[BBox] | None = None):
        if boxes is None:
            boxes = [BBox(cx=0.5, cy=0.5, w=0.25, h=0.125, class_id=0, score=0.9)]
        self.boxes = list(boxes)

    def detect(self, image: ImageBuf) -> list[BBox]:
        return list(self.boxes)


class TensorMockDetector:
    """Returns a fixed raw head tensor; exercises the in-engine decode path."""

    def __init__(self, raw: np.ndarray):
        self.raw = np.asarray(raw, dtype=np.float64)

    def detect(self, image: ImageBuf) -> np.ndarray:
        return self.raw


def build_backends(config: PipelineConfig) -> Backends:
    """Resolve backend id strings from config.

    classifier_backend: "mock"
    detector_backend:   "mock"
    ocr_backend:        "mock" | "mock:<manifest.json>" | "external"
    """
    if config.classifier_backend == "mock":
        classifier = MockClassifier()
    else:
        raise ConfigError("classifier_backend", f"unknown id {config.classifier_backend!r}")

    if config.detector_backend == "mock":
        detector = MockDetector()
    else:
        raise ConfigError("detector_backend", f"unknown id {config.detector_backend!r}")

    ocr_id = config.ocr_backend
    if ocr_id == "mock":
        ocr: "MockOcrEngine | ManifestOcrEngine | ExternalOcrEngine" = MockOcrEngine()
    elif ocr_id.startswith("mock:"):
        ocr = ManifestOcrEngine(ocr_id.partition(":")[2])
    elif ocr_id == "external":
        ocr = ExternalOcrEngine(
            config.ocr_engine_cmd,
            language=config.ocr_language,
            timeout_ms=config.ocr_timeout_ms,
            workers=config.ocr_workers,
        )
    else:
        raise ConfigError("ocr_backend", f"unknown id {ocr_id!r}")

    head_spec = load_head_spec(config.head_spec) if config.head_spec else None
    return Backends(classifier=classifier, detector=detector, ocr=ocr, head_spec=head_spec)
