"""Box arithmetic, detector-head decoding and non-maximum suppression."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch

__all__ = [
    "BBox",
    "DetectorHeadSpec",
    "PixelRect",
    "filters_for",
    "iou",
    "decode_head",
    "nms",
    "to_pixel",
    "load_tensor",
    "save_tensor",
    "load_head_spec",
]

# Floor applied to decoded sizes so float underflow cannot produce a zero-area box.
_SIZE_FLOOR = 1e-12


@dataclass(frozen=True)
class BBox:
    """Normalized detection box: center, size, class id and confidence."""

    cx: float
    cy: float
    w: float
    h: float
    class_id: int = 0
    score: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise ValueError(f"center out of range: ({self.cx}, {self.cy})")
        if not (0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0):
            raise ValueError(f"size out of range: ({self.w}, {self.h})")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score out of range: {self.score}")
        if self.class_id < 0:
            raise ValueError(f"negative class id: {self.class_id}")

    def corners(self) -> tuple[float, float, float, float]:
        """(x1, y1, x2, y2), still normalized."""
        hw = self.w / 2.0
        hh = self.h / 2.0
        return self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh


@dataclass(frozen=True)
class DetectorHeadSpec:
    """Single detector head: grid, anchors and the sizes they are expressed in."""

    anchor_count: int
    class_count: int
    input_width: int
    input_height: int
    grid_size: int
    anchors: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if self.anchor_count < 1 or self.class_count < 1 or self.grid_size < 1:
            raise ValueError("anchor_count, class_count and grid_size must be >= 1")
        if self.input_width < 1 or self.input_height < 1:
            raise ValueError("input dims must be >= 1")
        if len(self.anchors) != self.anchor_count:
            raise ValueError(
                f"expected {self.anchor_count} anchors, got {len(self.anchors)}"
            )
        for aw, ah in self.anchors:
            if aw <= 0 or ah <= 0:
                raise ValueError(f"anchor dims must be positive: ({aw}, {ah})")

    @property
    def values_per_anchor(self) -> int:
        # tx, ty, tw, th, objectness + one logit per class
        return 5 + self.class_count

    @property
    def tensor_size(self) -> int:
        return self.grid_size * self.grid_size * self.anchor_count * self.values_per_anchor


@dataclass(frozen=True)
class PixelRect:
    """Integer top-left rect in frame pixels."""

    x: int
    y: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"rect dims must be >= 1: {self.width}x{self.height}")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"rect origin must be >= 0: ({self.x}, {self.y})")


def filters_for(spec: DetectorHeadSpec) -> int:
    """Convolutional filter count feeding the head: (A + CL) * 3."""
    return (spec.anchor_count + spec.class_count) * 3


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two axis-aligned boxes; 0 when disjoint."""
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    # corner-derived areas keep iou(a, a) == 1.0 exact despite rounding
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # exp overflow saturates to inf and the quotient to 0/1, which is the exact limit
    with np.errstate(over="ignore"):
        return np.where(x >= 0.0, 1.0 / (1.0 + np.exp(-x)), np.exp(x) / (1.0 + np.exp(x)))


def decode_head(raw, spec: DetectorHeadSpec, conf_threshold: float) -> list[BBox]:
    """Decode a raw head tensor into scored boxes.

    Per cell (i, j) and anchor k:
      center = ((sigmoid(tx) + j) / S, (sigmoid(ty) + i) / S)
      size   = (anchor_w * e^tw / input_width, anchor_h * e^th / input_height)
      score  = sigmoid(t_obj) * sigmoid(class logit), class = argmax of class logits

    Emits only boxes with score >= conf_threshold; centers clamped to [0, 1],
    sizes clamped to (0, 1]. Output follows (cell row, cell col, anchor) order.
    """
    if not 0.0 <= conf_threshold <= 1.0:
        raise ValueError(f"conf_threshold out of range: {conf_threshold}")
    arr = np.asarray(raw, dtype=np.float64).reshape(-1)
    if arr.size != spec.tensor_size:
        raise ShapeMismatch(
            f"tensor has {arr.size} values, head needs {spec.tensor_size} "
            f"(S={spec.grid_size}, A={spec.anchor_count}, CL={spec.class_count})"
        )
    s = spec.grid_size
    a = spec.anchor_count
    v = spec.values_per_anchor
    t = arr.reshape(s, s, a, v)

    col = np.arange(s, dtype=np.float64).reshape(1, s, 1)
    row = np.arange(s, dtype=np.float64).reshape(s, 1, 1)
    cx = (_sigmoid(t[..., 0]) + col) / s
    cy = (_sigmoid(t[..., 1]) + row) / s

    anchors = np.asarray(spec.anchors, dtype=np.float64)
    with np.errstate(over="ignore"):
        w = anchors[:, 0].reshape(1, 1, a) * np.exp(t[..., 2]) / spec.input_width
        h = anchors[:, 1].reshape(1, 1, a) * np.exp(t[..., 3]) / spec.input_height

    obj = _sigmoid(t[..., 4])
    cls_logits = t[..., 5:]
    cls_id = np.argmax(cls_logits, axis=-1)
    cls_best = np.take_along_axis(cls_logits, cls_id[..., None], axis=-1)[..., 0]
    score = obj * _sigmoid(cls_best)

    cx = np.clip(cx, 0.0, 1.0)
    cy = np.clip(cy, 0.0, 1.0)
    w = np.clip(w, _SIZE_FLOOR, 1.0)
    h = np.clip(h, _SIZE_FLOOR, 1.0)

    boxes: list[BBox] = []
    for i, j, k in np.argwhere(score >= conf_threshold):
        boxes.append(
            BBox(
                cx=float(cx[i, j, k]),
                cy=float(cy[i, j, k]),
                w=float(w[i, j, k]),
                h=float(h[i, j, k]),
                class_id=int(cls_id[i, j, k]),
                score=float(score[i, j, k]),
            )
        )
    return boxes


def nms(boxes: list[BBox], iou_threshold: float) -> list[BBox]:
    """Greedy per-class suppression; ties on score resolved by original index.

    Keeps the highest-score remaining box, discards remaining same-class boxes
    whose IoU with it exceeds the threshold. Output sorted by descending score.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold out of range: {iou_threshold}")
    order = sorted(range(len(boxes)), key=lambda i: (-boxes[i].score, i))
    alive = [True] * len(boxes)
    kept: list[BBox] = []
    for pos, i in enumerate(order):
        if not alive[i]:
            continue
        kept.append(boxes[i])
        for j in order[pos + 1 :]:
            if not alive[j] or boxes[j].class_id != boxes[i].class_id:
                continue
            if iou(boxes[i], boxes[j]) > iou_threshold:
                alive[j] = False
    return kept


def to_pixel(box: BBox, frame_width: int, frame_height: int) -> PixelRect:
    """Project a normalized box onto integer frame pixels, clamped inside."""
    if frame_width < 1 or frame_height < 1:
        raise ValueError("frame dims must be >= 1")
    x1f, y1f, x2f, y2f = box.corners()
    x1 = int(math.floor(x1f * frame_width + 0.5))
    x2 = int(math.floor(x2f * frame_width + 0.5))
    y1 = int(math.floor(y1f * frame_height + 0.5))
    y2 = int(math.floor(y2f * frame_height + 0.5))
    x1 = min(max(x1, 0), frame_width - 1)
    y1 = min(max(y1, 0), frame_height - 1)
    x2 = min(max(x2, x1 + 1), frame_width)
    y2 = min(max(y2, y1 + 1), frame_height)
    return PixelRect(x=x1, y=y1, width=x2 - x1, height=y2 - y1)


def save_tensor(path, raw, grid_size: int, anchor_count: int, class_count: int) -> None:
    """Write a raw head tensor: ASCII header "S A CL\\n" + little-endian f32."""
    arr = np.asarray(raw, dtype="<f4").reshape(-1)
    with open(path, "wb") as f:
        f.write(f"{grid_size} {anchor_count} {class_count}\n".encode("ascii"))
        f.write(arr.tobytes())


def load_tensor(path) -> tuple[np.ndarray, int, int, int]:
    """Read a raw head tensor file; returns (values, S, A, CL).

    Raises ShapeMismatch when the payload length disagrees with the header.
    """
    with open(path, "rb") as f:
        header = bytearray()
        while True:
            b = f.read(1)
            if not b:
                raise ShapeMismatch(f"{path}: missing tensor header")
            if b == b"\n":
                break
            header += b
            if len(header) > 64:
                raise ShapeMismatch(f"{path}: unterminated tensor header")
        parts = header.decode("ascii", errors="replace").split()
        if len(parts) != 3:
            raise ShapeMismatch(f"{path}: header must be 'S A CL', got {bytes(header)!r}")
        try:
            s, a, cl = (int(p) for p in parts)
        except ValueError as e:
            raise ShapeMismatch(f"{path}: non-integer header field: {e}") from e
        payload = f.read()
    if len(payload) % 4 != 0:
        raise ShapeMismatch(f"{path}: payload is not a whole number of f32 values")
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    expect = s * s * a * (5 + cl)
    if values.size != expect:
        raise ShapeMismatch(
            f"{path}: header promises {expect} values, payload has {values.size}"
        )
    return values, s, a, cl


def load_head_spec(path) -> DetectorHeadSpec:
    """Parse a head spec file: flat key = value lines.

    Keys: grid_size, anchor_count, class_count, input_width, input_height,
    anchors (comma-separated WxH pixel pairs).
    """
    fields: dict[str, str] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{line_no}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        fields[key.strip()] = value.strip()
    try:
        anchors = tuple(
            (float(w), float(h))
            for w, h in (pair.strip().split("x") for pair in fields["anchors"].split(","))
        )
        return DetectorHeadSpec(
            anchor_count=int(fields["anchor_count"]),
            class_count=int(fields["class_count"]),
            input_width=int(fields["input_width"]),
            input_height=int(fields["input_height"]),
            grid_size=int(fields["grid_size"]),
            anchors=anchors,
        )
    except KeyError as e:
        raise ValueError(f"{path}: missing head spec key {e.args[0]!r}") from e
