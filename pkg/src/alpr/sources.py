"""Frame sources: PPM frame directories, raw byte streams, synthetic frames."""

from __future__ import annotations

import re
import subprocess
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import SourceUnavailable
from .imaging import ImageBuf, read_image

__all__ = [
    "FrameEnvelope",
    "FrameSource",
    "DirectoryFrameSource",
    "RawStreamSource",
    "SyntheticSource",
    "PacedSource",
    "open_source",
    "write_frame_dir_manifest",
]

MANIFEST_NAME = "manifest.txt"


@dataclass(frozen=True)
class FrameEnvelope:
    """One decoded frame with its index and synthesized capture time."""

    frame_index: int
    timestamp_ms: float
    image: ImageBuf


class FrameSource:
    """Iterable of FrameEnvelopes.

    real_time sources push at their own pace and tolerate drops; pull sources
    are iterated on demand and never drop.
    """

    real_time = False
    fps: float = 30.0

    def __iter__(self) -> Iterator[FrameEnvelope]:
        raise NotImplementedError


def _timestamp_ms(index: int, fps: float) -> float:
    return round(index * 1000.0 / fps, 3) if fps > 0 else float(index)


def write_frame_dir_manifest(directory, fps: float, frames: int | None = None) -> None:
    lines = [f"fps={fps:g}"]
    if frames is not None:
        lines.append(f"frames={frames}")
    (Path(directory) / MANIFEST_NAME).write_text("\n".join(lines) + "\n", encoding="utf-8")


class DirectoryFrameSource(FrameSource):
    """Numbered PPM frames plus a manifest carrying `fps=<n>`."""

    real_time = False

    def __init__(self, directory):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise SourceUnavailable(f"frame directory not found: {self.directory}")
        manifest = self.directory / MANIFEST_NAME
        if not manifest.is_file():
            raise SourceUnavailable(f"missing {MANIFEST_NAME} in {self.directory}")
        fps = None
        for line in manifest.read_text(encoding="utf-8").splitlines():
            match = re.fullmatch(r"fps\s*=\s*([0-9.]+)", line.strip())
            if match:
                fps = float(match.group(1))
        if fps is None or fps <= 0:
            raise SourceUnavailable(f"manifest lacks a valid fps line: {manifest}")
        self.fps = fps
        self.frames = sorted(
            self.directory.glob("*.ppm"),
            key=lambda p: (0, int(p.stem)) if p.stem.isdigit() else (1, p.stem),
        )

    def __iter__(self) -> Iterator[FrameEnvelope]:
        for index, path in enumerate(self.frames):
            yield FrameEnvelope(
                frame_index=index,
                timestamp_ms=_timestamp_ms(index, self.fps),
                image=read_image(path),
            )


def _yuv420p_to_rgb(y: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    # BT.601 full-range; chroma upsampled 2x nearest
    u_full = u.repeat(2, axis=0).repeat(2, axis=1)[: y.shape[0], : y.shape[1]]
    v_full = v.repeat(2, axis=0).repeat(2, axis=1)[: y.shape[0], : y.shape[1]]
    yf = y.astype(np.float64)
    uf = u_full.astype(np.float64) - 128.0
    vf = v_full.astype(np.float64) - 128.0
    r = yf + 1.402 * vf
    g = yf - 0.344136 * uf - 0.714136 * vf
    b = yf + 1.772 * uf
    rgb = np.stack([r, g, b], axis=-1)
    return np.clip(np.floor(rgb + 0.5), 0.0, 255.0).astype(np.uint8)


class RawStreamSource(FrameSource):
    """Raw frames over a byte stream, headed by one ASCII line `width height fps`.

    Payload is rgb24 (default) or yuv420p; a truncated final frame is dropped.
    """

    real_time = True

    def __init__(self, stream=None, pixel_format: str = "rgb24"):
        if pixel_format not in ("rgb24", "yuv420p"):
            raise SourceUnavailable(f"unsupported stream format {pixel_format!r}")
        self.stream = stream if stream is not None else sys.stdin.buffer
        self.pixel_format = pixel_format
        header = bytearray()
        while not header.endswith(b"\n"):
            b = self.stream.read(1)
            if not b:
                raise SourceUnavailable("stream ended before its header line")
            header += b
            if len(header) > 64:
                raise SourceUnavailable("unterminated stream header")
        parts = header.decode("ascii", errors="replace").split()
        if len(parts) != 3:
            raise SourceUnavailable(f"stream header must be 'width height fps', got {parts}")
        try:
            self.width, self.height = int(parts[0]), int(parts[1])
            self.fps = float(parts[2])
        except ValueError as e:
            raise SourceUnavailable(f"bad stream header: {e}") from e
        if self.width < 1 or self.height < 1 or self.fps <= 0:
            raise SourceUnavailable("stream header values must be positive")

    def _frame_size(self) -> int:
        if self.pixel_format == "rgb24":
            return self.width * self.height * 3
        return self.width * self.height + 2 * ((self.width // 2) * (self.height // 2))

    def _read_exact(self, n: int) -> bytes | None:
        chunks = bytearray()
        while len(chunks) < n:
            chunk = self.stream.read(n - len(chunks))
            if not chunk:
                return None
            chunks += chunk
        return bytes(chunks)

    def __iter__(self) -> Iterator[FrameEnvelope]:
        size = self._frame_size()
        index = 0
        while True:
            payload = self._read_exact(size)
            if payload is None:
                return
            if self.pixel_format == "rgb24":
                arr = np.frombuffer(payload, dtype=np.uint8).reshape(
                    self.height, self.width, 3
                )
            else:
                ylen = self.width * self.height
                clen = (self.width // 2) * (self.height // 2)
                y = np.frombuffer(payload[:ylen], dtype=np.uint8).reshape(
                    self.height, self.width
                )
                u = np.frombuffer(payload[ylen : ylen + clen], dtype=np.uint8).reshape(
                    self.height // 2, self.width // 2
                )
                v = np.frombuffer(payload[ylen + clen :], dtype=np.uint8).reshape(
                    self.height // 2, self.width // 2
                )
                arr = _yuv420p_to_rgb(y, u, v)
            yield FrameEnvelope(
                frame_index=index,
                timestamp_ms=_timestamp_ms(index, self.fps),
                image=ImageBuf(arr),
            )
            index += 1


class SyntheticSource(FrameSource):
    """Cycles pre-built frames; count=None runs until stopped."""

    def __init__(self, frames: Iterable[ImageBuf], count: int | None, fps: float = 30.0):
        self.pool = list(frames)
        if not self.pool:
            raise SourceUnavailable("synthetic source needs at least one frame")
        self.count = count
        self.fps = fps

    def __iter__(self) -> Iterator[FrameEnvelope]:
        index = 0
        while self.count is None or index < self.count:
            yield FrameEnvelope(
                frame_index=index,
                timestamp_ms=_timestamp_ms(index, self.fps),
                image=self.pool[index % len(self.pool)],
            )
            index += 1


class PacedSource(FrameSource):
    """Wraps a source, sleeping to emit at its fps; marks the stream real-time."""

    real_time = True

    def __init__(self, inner: FrameSource, fps: float | None = None):
        self.inner = inner
        self.fps = fps if fps is not None else inner.fps

    def __iter__(self) -> Iterator[FrameEnvelope]:
        interval = 1.0 / self.fps if self.fps > 0 else 0.0
        next_at = time.perf_counter()
        for envelope in self.inner:
            delay = next_at - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
            next_at = time.perf_counter() + interval
            yield envelope


def _gradient_frame(width: int, height: int, phase: int) -> ImageBuf:
    xs = (np.arange(width, dtype=np.uint32) + 37 * phase) % 256
    ys = (np.arange(height, dtype=np.uint32) * 3 + 11 * phase) % 256
    r = np.broadcast_to(xs[None, :], (height, width))
    g = np.broadcast_to(ys[:, None], (height, width))
    b = ((r.astype(np.uint32) + g) // 2) % 256
    return ImageBuf(np.stack([r, g, b], axis=-1).astype(np.uint8))


def synthetic_frames(width: int, height: int, variants: int = 3) -> list[ImageBuf]:
    """Deterministic gradient frames with enough contrast for Otsu."""
    return [_gradient_frame(width, height, k) for k in range(variants)]


def open_source(spec: str, stream_format: str = "rgb24", decoder_cmd: str = "") -> FrameSource:
    """Resolve a source spec: a frame directory, '-' for stdin, or
    'synth:<count>x<width>x<height>@<fps>'."""
    if not spec:
        raise SourceUnavailable("no source configured")
    if spec == "-":
        if decoder_cmd:
            proc = subprocess.Popen(decoder_cmd, shell=True, stdout=subprocess.PIPE)
            return RawStreamSource(proc.stdout, stream_format)
        return RawStreamSource(None, stream_format)
    if spec.startswith("synth:"):
        match = re.fullmatch(r"synth:(\d+)x(\d+)x(\d+)@([0-9.]+)", spec)
        if not match:
            raise SourceUnavailable(
                f"bad synthetic source spec {spec!r}; want synth:<count>x<w>x<h>@<fps>"
            )
        count, width, height, fps = (
            int(match.group(1)),
            int(match.group(2)),
            int(match.group(3)),
            float(match.group(4)),
        )
        return SyntheticSource(synthetic_frames(width, height), count or None, fps)
    return DirectoryFrameSource(spec)
