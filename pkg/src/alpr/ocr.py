"""Plate-crop preprocessing, external OCR engine adapter, text normalization
and the character-accuracy metric."""

from __future__ import annotations

import hashlib
import json
import shlex
import subprocess
import tempfile
import threading
import time
import unicodedata
from dataclasses import dataclass
from pathlib import Path

from .errors import DegenerateHistogram, EmptyGroundTruth, EngineCrashed, EngineNotFound
from .imaging import (
    ImageBuf,
    binarize,
    grayscale,
    histogram,
    image_to_bytes,
    invert,
    otsu_threshold,
    resize,
)

__all__ = [
    "OcrResult",
    "PlatePrepared",
    "preprocess_plate",
    "normalize_text",
    "graphemes",
    "char_accuracy",
    "ExternalOcrEngine",
    "MockOcrEngine",
    "ManifestOcrEngine",
    "plate_char_count",
    "prepared_content_hash",
]

MIN_CROP_SIDE = 8
OCR_TARGET_HEIGHT = 64

_BANGLA_START, _BANGLA_END = 0x0980, 0x09FF
_VIRAMA = "্"
_ZWJ = "‍"
_ZWNJ = "‌"


@dataclass(frozen=True)
class OcrResult:
    """Raw engine output plus how it was obtained."""

    raw_text: str
    duration_ms: float
    polarity_used: str = "normal"  # "normal" | "inverted"
    timed_out: bool = False

    def __post_init__(self):
        if self.duration_ms < 0:
            raise ValueError(f"duration must be >= 0, got {self.duration_ms}")
        if self.timed_out and self.raw_text:
            raise ValueError("timed-out result cannot carry text")


@dataclass(frozen=True)
class PlatePrepared:
    """Binarized plate crop ready for the engine."""

    image: ImageBuf
    threshold: int
    scale: float


def preprocess_plate(crop: ImageBuf) -> PlatePrepared:
    """grayscale -> upscale to >= 64 px height -> Otsu -> binarize.

    Raises DegenerateHistogram for crops with no intensity separation and
    ValueError for crops below 8x8.
    """
    if crop.channels != 3:
        raise ValueError(f"plate crop must be 3-channel, got {crop.channels}")
    if crop.width < MIN_CROP_SIDE or crop.height < MIN_CROP_SIDE:
        raise ValueError(
            f"plate crop must be >= {MIN_CROP_SIDE}x{MIN_CROP_SIDE}, "
            f"got {crop.width}x{crop.height}"
        )
    gray = grayscale(crop)
    scale = 1.0
    if gray.height < OCR_TARGET_HEIGHT:
        scale = OCR_TARGET_HEIGHT / gray.height
        new_w = max(1, int((gray.width * OCR_TARGET_HEIGHT / gray.height) + 0.5))
        gray = resize(gray, new_w, OCR_TARGET_HEIGHT)
    level = otsu_threshold(histogram(gray))
    return PlatePrepared(image=binarize(gray, level), threshold=level, scale=scale)


def _keep_char(ch: str) -> bool:
    code = ord(ch)
    if _BANGLA_START <= code <= _BANGLA_END:
        return unicodedata.category(ch) in ("Lo", "Mn", "Mc", "Nd")
    return ch in "0123456789- "


def normalize_text(raw: str) -> str:
    """NFC-compose, keep only the plate alphabet, collapse whitespace, trim.

    Kept characters: Bangla letters/marks/digits, ASCII digits, hyphen, space.
    Composing to NFC fixes combining-mark order so equal-looking strings
    compare equal.
    """
    composed = unicodedata.normalize("NFC", raw)
    spaced = "".join(" " if ch.isspace() else ch for ch in composed)
    kept = "".join(ch for ch in spaced if _keep_char(ch))
    return " ".join(part for part in kept.split(" ") if part)


def graphemes(text: str) -> list[str]:
    """Split into user-perceived characters.

    A cluster grows over combining marks, over consonants joined by the
    Bangla virama, and over zero-width joiners; this matches how plate
    characters are counted by eye.
    """
    clusters: list[str] = []
    for ch in text:
        attach = False
        if clusters:
            prev = clusters[-1][-1]
            if unicodedata.category(ch) in ("Mn", "Mc", "Me"):
                attach = True
            elif prev == _VIRAMA or prev == _ZWJ:
                attach = True
            elif ch in (_ZWJ, _ZWNJ):
                attach = True
        if attach:
            clusters[-1] += ch
        else:
            clusters.append(ch)
    return clusters


def char_accuracy(ground_truth: str, predicted: str) -> int:
    """Percent of ground-truth graphemes matched under a minimum-edit alignment.

    Alignment uses unit costs over grapheme clusters; among minimum-cost
    alignments the one with the most matches is chosen. Result is
    round(100 * matches / len(ground_truth)), half away from zero.
    """
    gt = graphemes(ground_truth)
    if not gt:
        raise EmptyGroundTruth("ground truth must be non-empty")
    pred = graphemes(predicted)
    n, m = len(gt), len(pred)
    # dp[j] = (cost, -matches) for aligning gt[:i] with pred[:j]
    prev = [(j, 0) for j in range(m + 1)]
    for i in range(1, n + 1):
        cur = [(i, 0)]
        for j in range(1, m + 1):
            match = gt[i - 1] == pred[j - 1]
            diag_cost, diag_neg = prev[j - 1]
            best = (diag_cost + (0 if match else 1), diag_neg - (1 if match else 0))
            up_cost, up_neg = prev[j]
            best = min(best, (up_cost + 1, up_neg))
            left_cost, left_neg = cur[j - 1]
            best = min(best, (left_cost + 1, left_neg))
            cur.append(best)
        prev = cur
    matches = -prev[m][1]
    return (200 * matches + n) // (2 * n)


def plate_char_count(text: str) -> int:
    """Recognized plate-alphabet characters (letters and digits only)."""
    return sum(
        1
        for ch in text
        if _keep_char(ch) and unicodedata.category(ch) in ("Lo", "Nd")
    )


def prepared_content_hash(prepared: PlatePrepared) -> str:
    """sha256 of the prepared image's canonical PGM bytes; mock manifest key."""
    return hashlib.sha256(image_to_bytes(prepared.image)).hexdigest()


class ExternalOcrEngine:
    """One-shot child-process adapter with a Tesseract-style command contract.

    The command template receives {input}, {output_base} and {language}; the
    engine must write UTF-8 text to <output_base>.txt. Both polarities of the
    binary image are tried and the result with more plate-alphabet characters
    wins (ties keep the normal polarity).
    """

    def __init__(
        self,
        cmd_template: str,
        language: str = "ben",
        timeout_ms: float = 5000.0,
        workers: int = 2,
    ):
        if not cmd_template.strip():
            raise ValueError("empty OCR engine command template")
        self.cmd_template = cmd_template
        self.language = language
        self.timeout_ms = timeout_ms
        self._slots = threading.Semaphore(max(1, workers))

    def recognize(self, prepared: PlatePrepared) -> OcrResult:
        deadline = time.perf_counter() + self.timeout_ms / 1000.0
        attempts = (("normal", prepared.image), ("inverted", invert(prepared.image)))
        results: list[tuple[str, str]] = []
        total_ms = 0.0
        timed_out = False
        for polarity, image in attempts:
            remaining = deadline - time.perf_counter()
            if remaining <= 0:
                timed_out = True
                break
            text, elapsed_ms, hit_timeout = self._invoke(image, remaining)
            total_ms += elapsed_ms
            if hit_timeout:
                timed_out = True
                continue
            results.append((polarity, text))
        best_polarity, best_text = "normal", ""
        best_count = -1
        for polarity, text in results:
            count = plate_char_count(text)
            if count > best_count:
                best_polarity, best_text, best_count = polarity, text, count
        if not best_text and timed_out:
            return OcrResult("", total_ms, "normal", timed_out=True)
        return OcrResult(best_text, total_ms, best_polarity)

    def _invoke(self, image: ImageBuf, budget_s: float) -> tuple[str, float, bool]:
        with self._slots:
            with tempfile.TemporaryDirectory(prefix="alpr-ocr-") as tmp:
                input_path = Path(tmp) / "plate.pgm"
                output_base = Path(tmp) / "plate"
                input_path.write_bytes(image_to_bytes(image))
                argv = shlex.split(
                    self.cmd_template.format(
                        input=str(input_path),
                        output_base=str(output_base),
                        language=self.language,
                    )
                )
                start = time.perf_counter()
                try:
                    proc = subprocess.Popen(
                        argv,
                        stdout=subprocess.DEVNULL,
                        stderr=subprocess.PIPE,
                    )
                except FileNotFoundError as e:
                    raise EngineNotFound(f"ocr engine not found: {argv[0]}") from e
                try:
                    _, stderr = proc.communicate(timeout=budget_s)
                except subprocess.TimeoutExpired:
                    proc.kill()
                    proc.wait()
                    return "", (time.perf_counter() - start) * 1000.0, True
                elapsed_ms = (time.perf_counter() - start) * 1000.0
                if proc.returncode != 0:
                    raise EngineCrashed(
                        proc.returncode, stderr.decode("utf-8", errors="replace")
                    )
                out_file = Path(f"{output_base}.txt")
                if not out_file.exists():
                    raise EngineCrashed(0, f"engine wrote no output file {out_file}")
                return out_file.read_text(encoding="utf-8"), elapsed_ms, False


class MockOcrEngine:
    """Deterministic stand-in returning fixed text and duration."""

    DEFAULT_TEXT = "ঢাকা মেট্রো গ ১২-৩৪৫৬"

    def __init__(self, text: str | None = None, duration_ms: float = 5.0):
        self.text = self.DEFAULT_TEXT if text is None else text
        self.duration_ms = duration_ms

    def recognize(self, prepared: PlatePrepared) -> OcrResult:
        return OcrResult(self.text, self.duration_ms)


class ManifestOcrEngine:
    """Mock engine driven by a JSON manifest: content hash -> fixed text."""

    def __init__(self, manifest_path, duration_ms: float = 5.0):
        self.mapping: dict[str, str] = json.loads(
            Path(manifest_path).read_text(encoding="utf-8")
        )
        self.duration_ms = duration_ms

    def recognize(self, prepared: PlatePrepared) -> OcrResult:
        text = self.mapping.get(prepared_content_hash(prepared), "")
        return OcrResult(text, self.duration_ms)
