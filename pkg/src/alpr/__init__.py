"""Realtime license plate recognition pipeline engine.

Frame ingestion -> vehicle gate -> plate detection -> OCR -> event store,
plus the operator HTTP service, evaluation metrics and a CLI.
"""

from .config import PipelineConfig
from .geometry import BBox, DetectorHeadSpec, PixelRect
from .imaging import ImageBuf
from .pipeline import DetectionEvent, RunSummary, VehicleClass
from .store import EventRecord, Store

__all__ = [
    "PipelineConfig",
    "BBox",
    "DetectorHeadSpec",
    "PixelRect",
    "ImageBuf",
    "DetectionEvent",
    "RunSummary",
    "VehicleClass",
    "EventRecord",
    "Store",
]

__version__ = "0.1.0"
