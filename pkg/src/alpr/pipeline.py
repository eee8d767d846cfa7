"""Three-stage flow over a frame stream: vehicle gate, plate detection, OCR,
with bounded buffering, latest-wins dropping and throughput metering."""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import imaging, ocr
from .backends import Backends
from .config import PipelineConfig
from .errors import (
    BackendFailure,
    DegenerateHistogram,
    EngineCrashed,
    EngineNotFound,
)
from .geometry import BBox, PixelRect, decode_head, nms, to_pixel
from .imaging import ImageBuf
from .sources import FrameEnvelope, FrameSource

__all__ = [
    "VehicleClass",
    "DetectionEvent",
    "RunSummary",
    "LetterboxMapping",
    "VEHICLE_CLASSES",
    "DETECTOR_INPUT",
    "gate_frame",
    "process_frame",
    "letterbox",
    "run",
    "LiveCounters",
]

VEHICLE_CLASSES = ("bus", "car", "motorbike", "truck")
GATE_INPUT = (96, 96)
DETECTOR_INPUT = (416, 416)


@dataclass(frozen=True)
class VehicleClass:
    """Winning gate class with its score and the full 4-score vector."""

    label: str
    score: float
    scores: tuple[float, float, float, float]

    def __post_init__(self):
        if self.label not in VEHICLE_CLASSES:
            raise ValueError(f"unknown vehicle class {self.label!r}")
        if len(self.scores) != 4 or any(not 0.0 <= s <= 1.0 for s in self.scores):
            raise ValueError(f"need 4 scores in [0, 1], got {self.scores}")


@dataclass(frozen=True)
class DetectionEvent:
    """One recognized plate occurrence."""

    frame_index: int
    timestamp_ms: float
    vehicle_class: VehicleClass
    plate_rect: PixelRect
    detector_score: float
    raw_text: str
    normalized_text: str
    ocr_ms: float
    ocr_timed_out: bool = False
    ocr_error: str = ""
    crop_ref: str = ""


@dataclass
class RunSummary:
    frames_in: int = 0
    frames_processed: int = 0
    frames_gated: int = 0
    frames_dropped: int = 0
    events: int = 0
    elapsed_ms: float = 0.0
    fps: float = 0.0
    error: str | None = None


@dataclass(frozen=True)
class LetterboxMapping:
    """Inverts boxes from the padded detector space back to the source frame."""

    scale: float
    pad_x: int
    pad_y: int
    frame_width: int
    frame_height: int
    target_width: int
    target_height: int

    def box_to_frame(self, box: BBox) -> BBox:
        def back(value: float, pad: int, frame_len: int, target_len: int) -> float:
            return ((value * target_len) - pad) / self.scale / frame_len

        cx = min(max(back(box.cx, self.pad_x, self.frame_width, self.target_width), 0.0), 1.0)
        cy = min(max(back(box.cy, self.pad_y, self.frame_height, self.target_height), 0.0), 1.0)
        w = min(max(box.w * self.target_width / self.scale / self.frame_width, 1e-9), 1.0)
        h = min(max(box.h * self.target_height / self.scale / self.frame_height, 1e-9), 1.0)
        return BBox(cx=cx, cy=cy, w=w, h=h, class_id=box.class_id, score=box.score)


def letterbox(
    img: ImageBuf, target_w: int = DETECTOR_INPUT[0], target_h: int = DETECTOR_INPUT[1]
) -> tuple[ImageBuf, LetterboxMapping]:
    """Aspect-preserving resize plus centered black padding."""
    scale = min(target_w / img.width, target_h / img.height)
    content_w = min(target_w, max(1, int(img.width * scale + 0.5)))
    content_h = min(target_h, max(1, int(img.height * scale + 0.5)))
    content = imaging.resize(img, content_w, content_h)
    pad_x = (target_w - content_w) // 2
    pad_y = (target_h - content_h) // 2
    if content_w == target_w and content_h == target_h:
        boxed = content
    else:
        canvas = np.zeros((target_h, target_w, img.channels), dtype=np.uint8)
        canvas[pad_y : pad_y + content_h, pad_x : pad_x + content_w] = content.data
        boxed = ImageBuf(canvas)
    mapping = LetterboxMapping(
        scale=scale,
        pad_x=pad_x,
        pad_y=pad_y,
        frame_width=img.width,
        frame_height=img.height,
        target_width=target_w,
        target_height=target_h,
    )
    return boxed, mapping


def gate_frame(frame: FrameEnvelope, classifier, threshold: float) -> VehicleClass | None:
    """Classify the downscaled frame; None means skip detection entirely."""
    small = imaging.resize(frame.image, *GATE_INPUT)
    try:
        scores = tuple(float(s) for s in classifier.classify(small))
    except Exception as e:
        raise BackendFailure("classifier", frame.frame_index, e) from e
    if len(scores) != 4 or any(not 0.0 <= s <= 1.0 for s in scores):
        raise BackendFailure(
            "classifier", frame.frame_index, f"expected 4 scores in [0, 1], got {scores}"
        )
    best = 0
    for i in range(1, 4):
        if scores[i] > scores[best]:  # ties keep the lower index
            best = i
    if scores[best] < threshold:
        return None
    return VehicleClass(label=VEHICLE_CLASSES[best], score=scores[best], scores=scores)


def _detect_boxes(
    frame: FrameEnvelope, boxed: ImageBuf, config: PipelineConfig, backends: Backends
) -> list[BBox]:
    try:
        output = backends.detector.detect(boxed)
    except Exception as e:
        raise BackendFailure("detector", frame.frame_index, e) from e
    if isinstance(output, np.ndarray):
        if backends.head_spec is None:
            raise BackendFailure(
                "detector", frame.frame_index, "raw tensor output needs a head_spec"
            )
        boxes = decode_head(output, backends.head_spec, config.detector_conf_threshold)
    else:
        boxes = [b for b in output if b.score >= config.detector_conf_threshold]
    return nms(boxes, config.nms_iou_threshold)


def _run_ocr(crop: ImageBuf, engine) -> tuple[ocr.OcrResult, ocr.PlatePrepared | None, str]:
    """Returns (result, prepared, error tag); unusable crops yield empty text."""
    try:
        prepared = ocr.preprocess_plate(crop)
    except (DegenerateHistogram, ValueError):
        return ocr.OcrResult("", 0.0), None, "unusable_crop"
    try:
        result = engine.recognize(prepared)
    except EngineNotFound:
        return ocr.OcrResult("", 0.0), prepared, "engine_not_found"
    except EngineCrashed:
        return ocr.OcrResult("", 0.0), prepared, "engine_crashed"
    return result, prepared, "timeout" if result.timed_out else ""


def _evaluate_frame(
    frame: FrameEnvelope, config: PipelineConfig, backends: Backends
) -> tuple[VehicleClass | None, list[tuple[DetectionEvent, ImageBuf | None]]]:
    vehicle = gate_frame(frame, backends.classifier, config.gate_threshold)
    if vehicle is None:
        return None, []
    boxed, mapping = letterbox(frame.image)
    events: list[tuple[DetectionEvent, ImageBuf | None]] = []
    for box in _detect_boxes(frame, boxed, config, backends):
        frame_box = mapping.box_to_frame(box)
        rect = to_pixel(frame_box, frame.image.width, frame.image.height)
        plate_crop = imaging.crop(frame.image, rect)
        result, prepared, error = _run_ocr(plate_crop, backends.ocr)
        event = DetectionEvent(
            frame_index=frame.frame_index,
            timestamp_ms=frame.timestamp_ms,
            vehicle_class=vehicle,
            plate_rect=rect,
            detector_score=box.score,
            raw_text=result.raw_text,
            normalized_text=ocr.normalize_text(result.raw_text),
            ocr_ms=result.duration_ms,
            ocr_timed_out=result.timed_out,
            ocr_error=error,
        )
        evidence = prepared.image if prepared is not None else None
        events.append((event, evidence))
    return vehicle, events


def process_frame(
    frame: FrameEnvelope, config: PipelineConfig, backends: Backends
) -> list[DetectionEvent]:
    """Gate, detect, read; empty list when gated out or nothing found.

    Events are ordered by descending detector score within the frame.
    """
    _, events = _evaluate_frame(frame, config, backends)
    return [event for event, _ in events]


class LiveCounters:
    """Single-writer counters with snapshot reads for /metrics and the stream."""

    def __init__(self):
        self._lock = threading.Lock()
        self.frames_in = 0
        self.frames_processed = 0
        self.frames_gated = 0
        self.frames_dropped = 0
        self.events = 0
        self._started = time.perf_counter()

    def reset(self):
        with self._lock:
            self.frames_in = 0
            self.frames_processed = 0
            self.frames_gated = 0
            self.frames_dropped = 0
            self.events = 0
            self._started = time.perf_counter()

    def add(self, **deltas: int):
        with self._lock:
            for name, delta in deltas.items():
                setattr(self, name, getattr(self, name) + delta)

    def snapshot(self) -> dict:
        with self._lock:
            elapsed = time.perf_counter() - self._started
            fps = self.frames_processed / elapsed if self.frames_processed else 0.0
            return {
                "frames_in": self.frames_in,
                "frames_processed": self.frames_processed,
                "frames_gated": self.frames_gated,
                "frames_dropped": self.frames_dropped,
                "events": self.events,
                "elapsed_ms": elapsed * 1000.0,
                "fps": fps,
            }


class _FrameQueue:
    """Bounded frame buffer between ingestion and processing."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.items: deque[FrameEnvelope] = deque()
        self.cond = threading.Condition()
        self.closed = False

    def put_blocking(self, frame: FrameEnvelope, stop: threading.Event) -> bool:
        with self.cond:
            while len(self.items) >= self.capacity and not self.closed and not stop.is_set():
                self.cond.wait(0.05)
            if self.closed or stop.is_set():
                return False
            self.items.append(frame)
            self.cond.notify_all()
            return True

    def put_latest_wins(self, frame: FrameEnvelope) -> int:
        """Append; when full, drop the oldest queued frame. Returns drops."""
        with self.cond:
            dropped = 0
            while len(self.items) >= self.capacity:
                self.items.popleft()
                dropped += 1
            self.items.append(frame)
            self.cond.notify_all()
            return dropped

    def get(self, stop: threading.Event) -> FrameEnvelope | None:
        with self.cond:
            while not self.items and not self.closed and not stop.is_set():
                self.cond.wait(0.05)
            if self.items and not stop.is_set():
                frame = self.items.popleft()
                self.cond.notify_all()
                return frame
            return None

    def close(self):
        with self.cond:
            self.closed = True
            self.cond.notify_all()

    def drain(self) -> int:
        with self.cond:
            remaining = len(self.items)
            self.items.clear()
            self.cond.notify_all()
            return remaining


EventSink = Callable[[DetectionEvent, "ImageBuf | None"], None]
FrameHook = Callable[[FrameEnvelope, "VehicleClass | None", list[DetectionEvent]], None]


def run(
    source: FrameSource,
    sink: EventSink,
    config: PipelineConfig,
    backends: Backends,
    stop: threading.Event | None = None,
    frame_hook: FrameHook | None = None,
    counters: LiveCounters | None = None,
) -> RunSummary:
    """Process the source until it ends or the stop event fires.

    Real-time sources drop the oldest queued frame when the buffer is full;
    pull sources are backpressured instead. Every event reaches the sink
    exactly once, in frame order, descending detector score within a frame.
    """
    stop = stop or threading.Event()
    counters = counters or LiveCounters()
    counters.reset()
    queue = _FrameQueue(config.queue_capacity)
    real_time = bool(getattr(source, "real_time", False))
    ingest_error: list[BaseException] = []

    def ingest():
        try:
            for frame in source:
                if stop.is_set() or queue.closed:
                    break
                counters.add(frames_in=1)
                if real_time:
                    dropped = queue.put_latest_wins(frame)
                    if dropped:
                        counters.add(frames_dropped=dropped)
                elif not queue.put_blocking(frame, stop):
                    counters.add(frames_dropped=1)  # pulled but never evaluated
                    break
        except Exception as e:  # source failure ends the run
            ingest_error.append(e)
        finally:
            queue.close()

    started = time.perf_counter()
    ingester = threading.Thread(target=ingest, name="alpr-ingest", daemon=True)
    ingester.start()

    summary = RunSummary()
    try:
        while True:
            frame = queue.get(stop)
            if frame is None:
                break
            vehicle, events = _evaluate_frame(frame, config, backends)
            counters.add(frames_processed=1)
            if vehicle is not None:
                counters.add(frames_gated=1)
            if events:
                counters.add(events=len(events))
            for event, evidence in events:
                sink(event, evidence)
            if frame_hook is not None:
                frame_hook(frame, vehicle, [event for event, _ in events])
    except Exception as e:
        summary.error = f"{type(e).__name__}: {e}"
    finally:
        stop.set()
        queue.close()
        ingester.join(timeout=5.0)
        leftover = queue.drain()
        if leftover:
            counters.add(frames_dropped=leftover)

    elapsed = time.perf_counter() - started
    snap = counters.snapshot()
    summary.frames_in = snap["frames_in"]
    summary.frames_processed = snap["frames_processed"]
    summary.frames_gated = snap["frames_gated"]
    summary.frames_dropped = snap["frames_dropped"]
    summary.events = snap["events"]
    summary.elapsed_ms = elapsed * 1000.0
    summary.fps = summary.frames_processed / elapsed if summary.frames_processed else 0.0
    if ingest_error and summary.error is None:
        summary.error = f"{type(ingest_error[0]).__name__}: {ingest_error[0]}"
    return summary
