"""HTTP control plane: the five operator functions, live event stream,
metrics, plate query, and frame/crop evidence endpoints."""

from __future__ import annotations

import json
import queue
import threading
import time
import urllib.parse
import urllib.request
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from . import pipeline
from .backends import Backends, build_backends
from .config import PipelineConfig
from .errors import SourceUnavailable
from .imaging import draw_box, image_to_bytes, write_image
from .pipeline import DetectionEvent, LiveCounters, RunSummary, VehicleClass
from .sources import FrameEnvelope, FrameSource, open_source, write_frame_dir_manifest
from .store import Store

__all__ = ["AlprService", "serve", "STREAM_BACKLOG"]

STREAM_BACKLOG = 256
WARNINGS_FILENAME = "warnings.ndjson"


class _Subscription:
    def __init__(self):
        self.messages: "queue.Queue[tuple[str, str]]" = queue.Queue(maxsize=STREAM_BACKLOG)
        self.dead = threading.Event()


class Broadcaster:
    """Fan-out of typed messages; a subscriber falling 256 messages behind
    is disconnected rather than blocking the pipeline."""

    def __init__(self):
        self._lock = threading.Lock()
        self._subs: set[_Subscription] = set()

    def subscribe(self) -> _Subscription:
        sub = _Subscription()
        with self._lock:
            self._subs.add(sub)
        return sub

    def unsubscribe(self, sub: _Subscription):
        with self._lock:
            self._subs.discard(sub)
        sub.dead.set()

    def publish(self, kind: str, payload: dict):
        body = json.dumps(payload, ensure_ascii=False)
        with self._lock:
            subs = list(self._subs)
        for sub in subs:
            try:
                sub.messages.put_nowait((kind, body))
            except queue.Full:
                sub.dead.set()

    def close(self):
        with self._lock:
            subs = list(self._subs)
            self._subs.clear()
        for sub in subs:
            sub.dead.set()


@dataclass
class _RecordingSession:
    directory: Path
    fps: float
    frames: int = 0


class AlprService:
    """Owns the pipeline state machine, the store and the stream.

    State transitions are serialized under one lock; recording is only
    reachable from running.
    """

    def __init__(
        self,
        config: PipelineConfig,
        backends: Backends | None = None,
        source_factory=None,
    ):
        self.config = config
        self.backends = backends if backends is not None else build_backends(config)
        self.store = Store(config.store_path)
        self.broadcaster = Broadcaster()
        self._source_factory = source_factory or (
            lambda: open_source(config.source, config.stream_format, config.decoder_cmd)
        )
        self._lock = threading.RLock()
        self._running = False
        self._recording: _RecordingSession | None = None
        self._record_counter = 0
        self._thread: threading.Thread | None = None
        self._stop = threading.Event()
        self._counters = LiveCounters()
        self._started_at_ms: float | None = None
        self._last_error: str | None = None
        self._last_summary: RunSummary | None = None
        self._latest: tuple[FrameEnvelope, list[DetectionEvent]] | None = None
        self._last_warning_ts = 0
        self._ticker_stop = threading.Event()
        self._ticker = threading.Thread(target=self._tick, name="alpr-metrics", daemon=True)
        self._ticker.start()

    # ---- state machine -------------------------------------------------

    def state_name(self) -> str:
        with self._lock:
            if self._running and self._recording is not None:
                return "recording+running"
            return "running" if self._running else "idle"

    def state(self) -> dict:
        with self._lock:
            snap = self._counters.snapshot()
            return {
                "state": self.state_name(),
                "started_at": self._started_at_ms,
                "fps": snap["fps"],
                "frames_processed": snap["frames_processed"],
                "frames_dropped": snap["frames_dropped"],
                "last_error": self._last_error,
            }

    def metrics(self) -> dict:
        snap = self._counters.snapshot()
        return {
            "fps": snap["fps"],
            "frames_in": snap["frames_in"],
            "frames_dropped": snap["frames_dropped"],
            "events_total": len(self.store),
            "state": self.state_name(),
        }

    def start(self) -> dict:
        with self._lock:
            if self._running:
                return self.state()
            source = self._source_factory()  # SourceUnavailable -> 409 upstream
            self._stop = threading.Event()
            self._last_error = None
            self._started_at_ms = time.time() * 1000.0
            self._running = True
            self._thread = threading.Thread(
                target=self._run, args=(source,), name="alpr-pipeline", daemon=True
            )
            self._thread.start()
        self.broadcaster.publish("state", self.state())
        return self.state()

    def stop(self) -> dict:
        with self._lock:
            thread = self._thread
            self._stop.set()
        if thread is not None:
            thread.join(timeout=10.0)
        state = self.state()
        if self._last_summary is not None:
            state["summary"] = vars(self._last_summary)
        self.broadcaster.publish("state", self.state())
        return state

    def _run(self, source: FrameSource):
        fps = getattr(source, "fps", 30.0)
        self._source_fps = fps
        try:
            summary = pipeline.run(
                source,
                sink=self._sink,
                config=self.config,
                backends=self.backends,
                stop=self._stop,
                frame_hook=lambda frame, vehicle, events: self._on_frame(frame, events, fps),
                counters=self._counters,
            )
            self._last_summary = summary
            if summary.error:
                self._last_error = summary.error
        except Exception as e:  # defensive: a crash must still release the state
            self._last_error = f"{type(e).__name__}: {e}"
        finally:
            with self._lock:
                self._finalize_recording()
                self._running = False
            self.broadcaster.publish("state", self.state())

    def _sink(self, event: DetectionEvent, crop):
        seq = self.store.append(event, crop)
        record = self.store.get(seq)
        assert record is not None
        self.broadcaster.publish("detection", json.loads(record.to_json()))

    def _on_frame(self, frame: FrameEnvelope, events: list[DetectionEvent], fps: float):
        with self._lock:
            self._latest = (frame, events)
            session = self._recording
        if session is None:
            return
        annotated = self._annotate(frame, events)
        write_image(session.directory / f"{session.frames + 1:06d}.ppm", annotated)
        with self._lock:
            session.frames += 1
            session.fps = fps
            write_frame_dir_manifest(session.directory, fps, session.frames)

    @staticmethod
    def _annotate(frame: FrameEnvelope, events: list[DetectionEvent]):
        image = frame.image
        for event in events:
            label = f"{event.vehicle_class.label} {event.detector_score:.2f}"
            image = draw_box(image, event.plate_rect, label)
        return image

    # ---- recording -----------------------------------------------------

    def record_start(self) -> dict:
        with self._lock:
            if not self._running:
                raise StateConflict("cannot record while idle")
            if self._recording is None:
                self._record_counter += 1
                stamp = time.strftime("%Y%m%d-%H%M%S")
                directory = Path(self.config.record_dir) / f"rec-{stamp}-{self._record_counter:03d}"
                directory.mkdir(parents=True, exist_ok=True)
                self._recording = _RecordingSession(
                    directory=directory, fps=getattr(self, "_source_fps", 30.0)
                )
        self.broadcaster.publish("state", self.state())
        return self.state()

    def record_stop(self) -> dict:
        with self._lock:
            self._finalize_recording()
        self.broadcaster.publish("state", self.state())
        return self.state()

    def _finalize_recording(self):
        session = self._recording
        if session is not None:
            write_frame_dir_manifest(session.directory, session.fps, session.frames)
            self._recording = None

    # ---- warnings ------------------------------------------------------

    def warning(self, reason: str, event_seq: int | None = None) -> dict:
        if event_seq is not None and self.store.get(event_seq) is None:
            raise UnknownEvent(f"no event with seq {event_seq}")
        with self._lock:
            ts = max(int(time.time() * 1000), self._last_warning_ts + 1)
            self._last_warning_ts = ts
        record = {"timestamp_ms": ts, "event_seq": event_seq, "reason": reason}
        warn_path = self.store.path.parent / WARNINGS_FILENAME
        with open(warn_path, "a", encoding="utf-8") as f:
            f.write(json.dumps(record, ensure_ascii=False) + "\n")
        self.broadcaster.publish("warning", record)
        if self.config.webhook_url:
            threading.Thread(
                target=self._post_webhook, args=(record,), daemon=True
            ).start()
        return record

    def _post_webhook(self, record: dict):
        try:
            request = urllib.request.Request(
                self.config.webhook_url,
                data=json.dumps(record).encode("utf-8"),
                headers={"Content-Type": "application/json"},
            )
            urllib.request.urlopen(request, timeout=5.0)
        except Exception:
            pass  # responders are best-effort; the stream copy already went out

    # ---- evidence ------------------------------------------------------

    def latest_frame_ppm(self) -> bytes | None:
        with self._lock:
            latest = self._latest
        if latest is None:
            return None
        frame, events = latest
        return image_to_bytes(self._annotate(frame, events))

    def crop_pgm(self, seq: int) -> bytes | None:
        record = self.store.get(seq)
        if record is None or not record.crop_ref:
            return None
        path = self.store.path.parent / record.crop_ref
        if not path.is_file():
            return None
        return path.read_bytes()

    def _tick(self):
        while not self._ticker_stop.wait(1.0):
            snap = self.metrics()
            self.broadcaster.publish("metrics", snap)

    def close(self):
        self._ticker_stop.set()
        self.stop()
        self.broadcaster.close()
        self.store.close()


class StateConflict(Exception):
    pass


class UnknownEvent(Exception):
    pass


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "alpr"

    @property
    def service(self) -> AlprService:
        return self.server.service  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):
        pass

    def _send_json(self, status: int, payload):
        body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _send_bytes(self, status: int, body: bytes, content_type: str):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return {}
        raw = self.rfile.read(length)
        try:
            parsed = json.loads(raw.decode("utf-8"))
        except ValueError:
            return {}
        return parsed if isinstance(parsed, dict) else {}

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_POST(self):
        path = urllib.parse.urlsplit(self.path).path
        try:
            if path == "/control/start":
                try:
                    self._send_json(200, self.service.start())
                except SourceUnavailable as e:
                    self._send_json(409, {"error": str(e)})
            elif path == "/control/stop":
                self._send_json(200, self.service.stop())
            elif path == "/control/record/start":
                try:
                    self._send_json(200, self.service.record_start())
                except StateConflict as e:
                    self._send_json(409, {"error": str(e)})
            elif path == "/control/record/stop":
                self._send_json(200, self.service.record_stop())
            elif path == "/control/warning":
                body = self._read_body()
                reason = str(body.get("reason") or "").strip()
                if not reason:
                    self._send_json(400, {"error": "warning needs a reason"})
                    return
                seq = body.get("event_seq")
                try:
                    record = self.service.warning(
                        reason, int(seq) if seq is not None else None
                    )
                    self._send_json(200, record)
                except UnknownEvent as e:
                    self._send_json(404, {"error": str(e)})
            else:
                self._send_json(404, {"error": f"no such endpoint {path}"})
        except (BrokenPipeError, ConnectionResetError):
            pass

    def do_GET(self):
        split = urllib.parse.urlsplit(self.path)
        path = split.path
        params = urllib.parse.parse_qs(split.query)
        try:
            if path == "/metrics":
                self._send_json(200, self.service.metrics())
            elif path == "/detections/latest":
                raw_n = params.get("n", ["10"])[0]
                try:
                    n = int(raw_n)
                except ValueError:
                    n = 0
                if n < 1:
                    self._send_json(400, {"error": f"n must be >= 1, got {raw_n!r}"})
                    return
                records = self.service.store.latest(n)
                self._send_json(200, [json.loads(r.to_json()) for r in records])
            elif path.startswith("/vehicles/"):
                plate = urllib.parse.unquote(path[len("/vehicles/") :])
                records = self.service.store.query_by_plate(plate)
                self._send_json(200, [json.loads(r.to_json()) for r in records])
            elif path == "/frame/latest":
                blob = self.service.latest_frame_ppm()
                if blob is None:
                    self._send_json(404, {"error": "no frame processed yet"})
                else:
                    self._send_bytes(200, blob, "image/x-portable-pixmap")
            elif path.startswith("/crops/"):
                try:
                    seq = int(path[len("/crops/") :])
                except ValueError:
                    self._send_json(400, {"error": "crop seq must be an integer"})
                    return
                blob = self.service.crop_pgm(seq)
                if blob is None:
                    self._send_json(404, {"error": f"no crop for seq {seq}"})
                else:
                    self._send_bytes(200, blob, "image/x-portable-graymap")
            elif path == "/stream":
                self._stream()
            else:
                self._send_json(404, {"error": f"no such endpoint {path}"})
        except (BrokenPipeError, ConnectionResetError):
            pass

    def _stream(self):
        sub = self.service.broadcaster.subscribe()
        try:
            self.send_response(200)
            self.send_header("Content-Type", "application/x-ndjson; charset=utf-8")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            # opening state snapshot lets clients render without waiting a tick
            state = json.dumps(self.service.state(), ensure_ascii=False)
            self.wfile.write(f"state {state}\n".encode("utf-8"))
            self.wfile.flush()
            while not sub.dead.is_set():
                try:
                    kind, body = sub.messages.get(timeout=0.5)
                except queue.Empty:
                    continue
                self.wfile.write(f"{kind} {body}\n".encode("utf-8"))
                self.wfile.flush()
        except (BrokenPipeError, ConnectionResetError, OSError):
            pass
        finally:
            self.service.broadcaster.unsubscribe(sub)
            self.close_connection = True


class _Server(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True


def serve(service: AlprService, bind: str | None = None, port: int | None = None) -> _Server:
    """Bind the HTTP server; caller drives serve_forever/shutdown."""
    address = (
        bind if bind is not None else service.config.bind_address,
        port if port is not None else service.config.port,
    )
    server = _Server(address, _Handler)
    server.service = service  # type: ignore[attr-defined]
    return server
