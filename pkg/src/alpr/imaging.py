"""8-bit raster operations: grayscale, Otsu thresholding, resize, crop,
geometric augmentation, box annotation, and PPM/PGM round-trip."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ChannelMismatch, DegenerateHistogram, OutOfBounds
from .geometry import PixelRect

__all__ = [
    "ImageBuf",
    "Histogram256",
    "GeoTransform",
    "grayscale",
    "histogram",
    "otsu_threshold",
    "binarize",
    "resize",
    "crop",
    "augment",
    "draw_box",
    "invert",
    "read_image",
    "write_image",
    "image_to_bytes",
    "image_from_bytes",
]

# ITU-R BT.601 luma weights
_LUMA_R, _LUMA_G, _LUMA_B = 0.299, 0.587, 0.114

ANNOTATION_COLOR = (255, 0, 0)


class ImageBuf:
    """Immutable 8-bit raster, 1 or 3 interleaved channels, row-major."""

    __slots__ = ("_data",)

    def __init__(self, data: np.ndarray):
        arr = np.asarray(data)
        if arr.dtype != np.uint8:
            raise ValueError(f"ImageBuf requires uint8 samples, got {arr.dtype}")
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ValueError(f"ImageBuf requires HxWx{{1,3}} data, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"image dims must be >= 1, got shape {arr.shape}")
        arr = np.ascontiguousarray(arr).copy()
        arr.flags.writeable = False
        self._data = arr

    @classmethod
    def filled(cls, width: int, height: int, channels: int, value) -> "ImageBuf":
        arr = np.empty((height, width, channels), dtype=np.uint8)
        arr[:] = value
        return cls(arr)

    @property
    def data(self) -> np.ndarray:
        """Read-only (h, w, c) view of the samples."""
        return self._data

    @property
    def width(self) -> int:
        return self._data.shape[1]

    @property
    def height(self) -> int:
        return self._data.shape[0]

    @property
    def channels(self) -> int:
        return self._data.shape[2]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ImageBuf):
            return NotImplemented
        return self._data.shape == other._data.shape and bool(
            np.array_equal(self._data, other._data)
        )

    def __hash__(self):
        return hash((self._data.shape, self._data.tobytes()))

    def __repr__(self) -> str:
        return f"ImageBuf({self.width}x{self.height}x{self.channels})"


@dataclass(frozen=True)
class Histogram256:
    """256-bin intensity histogram of a grayscale image."""

    bins: tuple[int, ...]

    def __post_init__(self):
        if len(self.bins) != 256:
            raise ValueError(f"histogram needs 256 bins, got {len(self.bins)}")
        if any(b < 0 for b in self.bins):
            raise ValueError("histogram bins must be non-negative")

    @property
    def total(self) -> int:
        return sum(self.bins)

    @property
    def distinct(self) -> int:
        return sum(1 for b in self.bins if b > 0)


@dataclass(frozen=True)
class GeoTransform:
    """One geometric augmentation: flip, rotate, translate or zoom."""

    kind: str
    degrees: float = 0.0
    dx: float = 0.0
    dy: float = 0.0
    scale: float = 1.0

    _KINDS = ("horizontal_flip", "rotate", "translate", "zoom")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if self.kind == "rotate" and abs(self.degrees) > 30.0:
            raise ValueError(f"|degrees| must be <= 30, got {self.degrees}")
        if self.kind == "translate" and (abs(self.dx) > 0.2 or abs(self.dy) > 0.2):
            raise ValueError(f"|dx|,|dy| must be <= 0.2, got ({self.dx}, {self.dy})")
        if self.kind == "zoom" and not 0.8 <= self.scale <= 1.2:
            raise ValueError(f"scale must be in [0.8, 1.2], got {self.scale}")

    @classmethod
    def horizontal_flip(cls) -> "GeoTransform":
        return cls(kind="horizontal_flip")

    @classmethod
    def rotate(cls, degrees: float) -> "GeoTransform":
        return cls(kind="rotate", degrees=degrees)

    @classmethod
    def translate(cls, dx: float, dy: float) -> "GeoTransform":
        return cls(kind="translate", dx=dx, dy=dy)

    @classmethod
    def zoom(cls, scale: float) -> "GeoTransform":
        return cls(kind="zoom", scale=scale)


def _round_half_up(values: np.ndarray) -> np.ndarray:
    return np.floor(values + 0.5)


def grayscale(img: ImageBuf) -> ImageBuf:
    """BT.601 luma of a 3-channel image, round-half-up."""
    if img.channels != 3:
        raise ChannelMismatch(f"grayscale needs 3 channels, got {img.channels}")
    rgb = img.data.astype(np.float64)
    luma = _LUMA_R * rgb[:, :, 0] + _LUMA_G * rgb[:, :, 1] + _LUMA_B * rgb[:, :, 2]
    out = np.clip(_round_half_up(luma), 0.0, 255.0).astype(np.uint8)
    return ImageBuf(out[:, :, None])


def histogram(img: ImageBuf) -> Histogram256:
    """Intensity counts of a 1-channel image."""
    if img.channels != 1:
        raise ChannelMismatch(f"histogram needs 1 channel, got {img.channels}")
    counts = np.bincount(img.data.ravel(), minlength=256)
    return Histogram256(bins=tuple(int(c) for c in counts))


def otsu_threshold(hist: Histogram256) -> int:
    """Threshold maximizing between-class variance; smallest maximizer on ties.

    Comparison runs in exact integer arithmetic: sigma_b^2(t) is proportional
    to (s0*w1 - s1*w0)^2 / (w0*w1) with integer cumulative count/intensity sums.
    """
    if hist.distinct < 2:
        raise DegenerateHistogram("histogram has fewer than 2 distinct intensities")
    bins = [int(b) for b in hist.bins]
    n = sum(bins)
    s_total = sum(i * b for i, b in enumerate(bins))
    best_t = -1
    best_num = 0  # (s0*w1 - s1*w0)^2
    best_den = 1  # w0*w1
    w0 = 0
    s0 = 0
    for t in range(256):
        w0 += bins[t]
        s0 += t * bins[t]
        w1 = n - w0
        if w0 == 0:
            continue
        if w1 == 0:
            break
        num = s0 * w1 - (s_total - s0) * w0
        num_sq = num * num
        den = w0 * w1
        if best_t < 0 or num_sq * best_den > best_num * den:
            best_t, best_num, best_den = t, num_sq, den
    return best_t


def binarize(img: ImageBuf, t: int) -> ImageBuf:
    """Pixels strictly above t become 255, the rest 0."""
    if img.channels != 1:
        raise ChannelMismatch(f"binarize needs 1 channel, got {img.channels}")
    out = np.where(img.data > t, 255, 0).astype(np.uint8)
    return ImageBuf(out)


def invert(img: ImageBuf) -> ImageBuf:
    """255 - x per sample; used for the OCR polarity retry."""
    return ImageBuf((255 - img.data.astype(np.int16)).astype(np.uint8))


def _sample_axis(src_len: int, dst_len: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # half-pixel-center source positions for each destination index
    pos = (np.arange(dst_len, dtype=np.float64) + 0.5) * (src_len / dst_len) - 0.5
    pos = np.clip(pos, 0.0, src_len - 1.0)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, src_len - 1)
    frac = pos - lo
    return lo, hi, frac


def resize(img: ImageBuf, target_w: int, target_h: int) -> ImageBuf:
    """Bilinear resize with half-pixel centers; identity at equal dims."""
    if target_w < 1 or target_h < 1:
        raise ValueError("target dims must be >= 1")
    if target_w == img.width and target_h == img.height:
        return img
    x0, x1, fx = _sample_axis(img.width, target_w)
    y0, y1, fy = _sample_axis(img.height, target_h)
    data = img.data
    v00 = data[np.ix_(y0, x0)].astype(np.float64)
    v01 = data[np.ix_(y0, x1)].astype(np.float64)
    v10 = data[np.ix_(y1, x0)].astype(np.float64)
    v11 = data[np.ix_(y1, x1)].astype(np.float64)
    fx = fx[None, :, None]
    fy = fy[:, None, None]
    top = v00 * (1.0 - fx) + v01 * fx
    bottom = v10 * (1.0 - fx) + v11 * fx
    out = top * (1.0 - fy) + bottom * fy
    return ImageBuf(np.clip(_round_half_up(out), 0.0, 255.0).astype(np.uint8))


def crop(img: ImageBuf, rect: PixelRect) -> ImageBuf:
    """Copy the rect region verbatim."""
    if rect.x + rect.width > img.width or rect.y + rect.height > img.height:
        raise OutOfBounds(
            f"rect {rect} exceeds image {img.width}x{img.height}"
        )
    return ImageBuf(img.data[rect.y : rect.y + rect.height, rect.x : rect.x + rect.width])


def augment(img: ImageBuf, t: GeoTransform, seed: int = 0) -> ImageBuf:
    """Apply one geometric transform; out-of-frame samples fill with black.

    Deterministic for a fixed (transform, seed); all four kinds are fully
    parameterized so the seed does not perturb the mapping.
    """
    del seed
    w, h = img.width, img.height
    xs = np.arange(w, dtype=np.float64)[None, :].repeat(h, axis=0)
    ys = np.arange(h, dtype=np.float64)[:, None].repeat(w, axis=1)

    if t.kind == "horizontal_flip":
        sx = (w - 1.0) - xs
        sy = ys
    elif t.kind == "rotate":
        theta = math.radians(t.degrees)
        cx, cy = (w - 1.0) / 2.0, (h - 1.0) / 2.0
        cos_t, sin_t = math.cos(theta), math.sin(theta)
        dx, dy = xs - cx, ys - cy
        sx = cx + cos_t * dx + sin_t * dy
        sy = cy - sin_t * dx + cos_t * dy
    elif t.kind == "translate":
        sx = xs - t.dx * w
        sy = ys - t.dy * h
    else:  # zoom
        cx, cy = (w - 1.0) / 2.0, (h - 1.0) / 2.0
        sx = cx + (xs - cx) / t.scale
        sy = cy + (ys - cy) / t.scale

    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = (sx - x0)[:, :, None]
    fy = (sy - y0)[:, :, None]
    x1 = x0 + 1
    y1 = y0 + 1

    def tap(yi: np.ndarray, xi: np.ndarray) -> np.ndarray:
        valid = ((xi >= 0) & (xi < w) & (yi >= 0) & (yi < h))[:, :, None]
        sample = img.data[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)].astype(np.float64)
        return sample * valid

    out = (
        tap(y0, x0) * (1.0 - fx) * (1.0 - fy)
        + tap(y0, x1) * fx * (1.0 - fy)
        + tap(y1, x0) * (1.0 - fx) * fy
        + tap(y1, x1) * fx * fy
    )
    return ImageBuf(np.clip(_round_half_up(out), 0.0, 255.0).astype(np.uint8))


# 5x7 bitmap glyphs, 5-bit rows top to bottom. Enough for ASCII labels
# ("bus 0.90"); unknown characters render as blanks.
_GLYPHS: dict[str, tuple[int, ...]] = {
    "0": (0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110),
    "1": (0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110),
    "2": (0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111),
    "3": (0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110),
    "4": (0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010),
    "5": (0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110),
    "6": (0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110),
    "7": (0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000),
    "8": (0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110),
    "9": (0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100),
    "A": (0b01110, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001),
    "B": (0b11110, 0b10001, 0b10001, 0b11110, 0b10001, 0b10001, 0b11110),
    "C": (0b01110, 0b10001, 0b10000, 0b10000, 0b10000, 0b10001, 0b01110),
    "D": (0b11100, 0b10010, 0b10001, 0b10001, 0b10001, 0b10010, 0b11100),
    "E": (0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b11111),
    "F": (0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b10000),
    "G": (0b01110, 0b10001, 0b10000, 0b10111, 0b10001, 0b10001, 0b01111),
    "H": (0b10001, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001),
    "I": (0b01110, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110),
    "J": (0b00111, 0b00010, 0b00010, 0b00010, 0b00010, 0b10010, 0b01100),
    "K": (0b10001, 0b10010, 0b10100, 0b11000, 0b10100, 0b10010, 0b10001),
    "L": (0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b11111),
    "M": (0b10001, 0b11011, 0b10101, 0b10101, 0b10001, 0b10001, 0b10001),
    "N": (0b10001, 0b11001, 0b10101, 0b10011, 0b10001, 0b10001, 0b10001),
    "O": (0b01110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110),
    "P": (0b11110, 0b10001, 0b10001, 0b11110, 0b10000, 0b10000, 0b10000),
    "Q": (0b01110, 0b10001, 0b10001, 0b10001, 0b10101, 0b10010, 0b01101),
    "R": (0b11110, 0b10001, 0b10001, 0b11110, 0b10100, 0b10010, 0b10001),
    "S": (0b01111, 0b10000, 0b10000, 0b01110, 0b00001, 0b00001, 0b11110),
    "T": (0b11111, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100),
    "U": (0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110),
    "V": (0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01010, 0b00100),
    "W": (0b10001, 0b10001, 0b10001, 0b10101, 0b10101, 0b10101, 0b01010),
    "X": (0b10001, 0b10001, 0b01010, 0b00100, 0b01010, 0b10001, 0b10001),
    "Y": (0b10001, 0b10001, 0b01010, 0b00100, 0b00100, 0b00100, 0b00100),
    "Z": (0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b10000, 0b11111),
    "-": (0b00000, 0b00000, 0b00000, 0b11111, 0b00000, 0b00000, 0b00000),
    ".": (0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b01100, 0b01100),
    ":": (0b00000, 0b01100, 0b01100, 0b00000, 0b01100, 0b01100, 0b00000),
    "%": (0b11001, 0b11010, 0b00010, 0b00100, 0b01000, 0b01011, 0b10011),
    " ": (0, 0, 0, 0, 0, 0, 0),
}

_GLYPH_W, _GLYPH_H, _GLYPH_STEP = 5, 7, 6


def draw_box(img: ImageBuf, rect: PixelRect, label: str) -> ImageBuf:
    """Annotate a copy with a 2-px outline and a bitmap label above the rect."""
    if img.channels != 3:
        raise ChannelMismatch(f"draw_box needs 3 channels, got {img.channels}")
    if rect.x + rect.width > img.width or rect.y + rect.height > img.height:
        raise OutOfBounds(f"rect {rect} exceeds image {img.width}x{img.height}")
    out = img.data.copy()
    color = np.array(ANNOTATION_COLOR, dtype=np.uint8)
    x1, y1 = rect.x, rect.y
    x2, y2 = rect.x + rect.width, rect.y + rect.height
    top = min(y1 + 2, y2)
    bottom = max(y2 - 2, top)
    out[y1:top, x1:x2] = color
    out[bottom:y2, x1:x2] = color
    out[y1:y2, x1 : min(x1 + 2, x2)] = color
    out[y1:y2, max(x2 - 2, x1) : x2] = color

    pen_y = y1 - _GLYPH_H - 2
    pen_x = x1
    for ch in label.upper():
        glyph = _GLYPHS.get(ch)
        if glyph is not None:
            for row, bits in enumerate(glyph):
                gy = pen_y + row
                if not 0 <= gy < img.height:
                    continue
                for col in range(_GLYPH_W):
                    if bits & (1 << (_GLYPH_W - 1 - col)):
                        gx = pen_x + col
                        if 0 <= gx < img.width:
                            out[gy, gx] = color
        pen_x += _GLYPH_STEP
        if pen_x >= img.width:
            break
    return ImageBuf(out)


def image_to_bytes(img: ImageBuf) -> bytes:
    """Serialize as binary PPM (P6, 3 channels) or PGM (P5, 1 channel)."""
    magic = b"P6" if img.channels == 3 else b"P5"
    header = b"%s\n%d %d\n255\n" % (magic, img.width, img.height)
    return header + img.data.tobytes()


def image_from_bytes(blob: bytes) -> ImageBuf:
    """Parse binary PPM (P6) / PGM (P5), maxval 255."""
    magic = blob[:2]
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"not a binary PGM/PPM: magic {magic!r}")
    channels = 3 if magic == b"P6" else 1

    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PNM header")
        fields.append(int(blob[start:pos]))
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    if maxval != 255:
        raise ValueError(f"only maxval 255 supported, got {maxval}")
    expected = width * height * channels
    payload = blob[pos : pos + expected]
    if len(payload) != expected:
        raise ValueError(f"PNM payload has {len(payload)} bytes, expected {expected}")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return ImageBuf(arr)


def write_image(path, img: ImageBuf) -> None:
    with open(path, "wb") as f:
        f.write(image_to_bytes(img))


def read_image(path) -> ImageBuf:
    with open(path, "rb") as f:
        return image_from_bytes(f.read())
