"""Append-only NDJSON event log with plate-number index and crop evidence."""

from __future__ import annotations

import json
import os
import threading
from dataclasses import asdict, dataclass
from pathlib import Path

from .errors import CorruptRecord, IoFailure
from .geometry import PixelRect
from .imaging import ImageBuf, write_image
from .ocr import normalize_text
from .pipeline import DetectionEvent, VehicleClass

__all__ = ["EventRecord", "Store", "CROPS_DIRNAME"]

CROPS_DIRNAME = "crops"


@dataclass(frozen=True)
class EventRecord:
    """A DetectionEvent as persisted: sequence number plus crop path."""

    seq: int
    frame_index: int
    timestamp_ms: float
    vehicle_class: VehicleClass
    plate_rect: PixelRect
    detector_score: float
    raw_text: str
    normalized_text: str
    ocr_ms: float
    ocr_timed_out: bool
    ocr_error: str
    crop_ref: str

    def to_json(self) -> str:
        payload = asdict(self)
        payload["vehicle_class"] = {
            "label": self.vehicle_class.label,
            "score": self.vehicle_class.score,
            "scores": list(self.vehicle_class.scores),
        }
        payload["plate_rect"] = {
            "x": self.plate_rect.x,
            "y": self.plate_rect.y,
            "width": self.plate_rect.width,
            "height": self.plate_rect.height,
        }
        return json.dumps(payload, ensure_ascii=False, separators=(", ", ": "))

    @classmethod
    def from_json(cls, line: str) -> "EventRecord":
        payload = json.loads(line)
        vc = payload["vehicle_class"]
        rect = payload["plate_rect"]
        return cls(
            seq=int(payload["seq"]),
            frame_index=int(payload["frame_index"]),
            timestamp_ms=float(payload["timestamp_ms"]),
            vehicle_class=VehicleClass(
                label=vc["label"], score=float(vc["score"]), scores=tuple(vc["scores"])
            ),
            plate_rect=PixelRect(
                x=int(rect["x"]),
                y=int(rect["y"]),
                width=int(rect["width"]),
                height=int(rect["height"]),
            ),
            detector_score=float(payload["detector_score"]),
            raw_text=payload["raw_text"],
            normalized_text=payload["normalized_text"],
            ocr_ms=float(payload["ocr_ms"]),
            ocr_timed_out=bool(payload["ocr_timed_out"]),
            ocr_error=payload["ocr_error"],
            crop_ref=payload["crop_ref"],
        )


class Store:
    """Durable append-only log; reopening replays it into an in-memory index.

    Single writer, many readers. A torn final line (crash artifact) is
    truncated away on open; malformed earlier lines raise CorruptRecord.
    """

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.crops_dir = self.path.parent / CROPS_DIRNAME
        self._lock = threading.RLock()
        self._records: list[EventRecord] = []
        self._by_plate: dict[str, list[int]] = {}
        self._replay()
        self._file = open(self.path, "ab")

    @classmethod
    def open(cls, path) -> "Store":
        return cls(path)

    def _replay(self):
        if not self.path.exists():
            self.path.touch()
            return
        blob = self.path.read_bytes()
        keep_until = len(blob)
        lines = blob.split(b"\n")
        torn = lines[-1]  # bytes after the final newline; empty when log is clean
        if torn:
            keep_until = len(blob) - len(torn)
        for line_no, line in enumerate(lines[:-1], 1):
            if not line.strip():
                continue
            try:
                record = EventRecord.from_json(line.decode("utf-8"))
            except (ValueError, KeyError, UnicodeDecodeError) as e:
                raise CorruptRecord(line_no, str(e)) from e
            self._index(record)
        if keep_until < len(blob):
            with open(self.path, "r+b") as f:
                f.truncate(keep_until)

    def _index(self, record: EventRecord):
        self._records.append(record)
        self._by_plate.setdefault(record.normalized_text, []).append(len(self._records) - 1)

    def append(self, event: DetectionEvent, crop: ImageBuf | None = None) -> int:
        """Write one event; the line is flushed and synced before returning."""
        with self._lock:
            seq = len(self._records) + 1
            crop_ref = event.crop_ref
            if crop is not None:
                self.crops_dir.mkdir(parents=True, exist_ok=True)
                crop_name = f"{seq:06d}.pgm"
                try:
                    write_image(self.crops_dir / crop_name, crop)
                except OSError as e:
                    raise IoFailure(f"writing crop for seq {seq}: {e}") from e
                crop_ref = f"{CROPS_DIRNAME}/{crop_name}"
            record = EventRecord(
                seq=seq,
                frame_index=event.frame_index,
                timestamp_ms=event.timestamp_ms,
                vehicle_class=event.vehicle_class,
                plate_rect=event.plate_rect,
                detector_score=event.detector_score,
                raw_text=event.raw_text,
                normalized_text=event.normalized_text,
                ocr_ms=event.ocr_ms,
                ocr_timed_out=event.ocr_timed_out,
                ocr_error=event.ocr_error,
                crop_ref=crop_ref,
            )
            try:
                self._file.write(record.to_json().encode("utf-8") + b"\n")
                self._file.flush()
                os.fsync(self._file.fileno())
            except OSError as e:
                raise IoFailure(f"appending seq {seq}: {e}") from e
            self._index(record)
            return seq

    def query_by_plate(self, plate: str) -> list[EventRecord]:
        """All records whose normalized text equals the normalized query."""
        key = normalize_text(plate)
        with self._lock:
            return [self._records[i] for i in self._by_plate.get(key, [])]

    def latest(self, n: int) -> list[EventRecord]:
        """Most recent n records, newest first."""
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        with self._lock:
            return list(reversed(self._records[-n:]))

    def get(self, seq: int) -> EventRecord | None:
        with self._lock:
            if 1 <= seq <= len(self._records):
                return self._records[seq - 1]
            return None

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def close(self):
        with self._lock:
            if not self._file.closed:
                self._file.close()

    def __enter__(self) -> "Store":
        return self

    def __exit__(self, *exc):
        self.close()
