"""Detection metrics (mAP, precision, recall, F1), darknet annotation parsing,
and the OCR performance report."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EmptyGroundTruth, MalformedLine
from .geometry import BBox, iou
from .ocr import char_accuracy, graphemes

__all__ = [
    "GroundTruthSet",
    "PredictionSet",
    "EvalReport",
    "parse_darknet_annotations",
    "parse_predictions_ndjson",
    "match_detections",
    "precision_recall",
    "f1",
    "average_precision",
    "evaluate",
    "OcrReportRow",
    "ocr_report",
    "render_ocr_report",
]

# image id -> ground-truth boxes (score field unused, fixed at 1.0)
GroundTruthSet = dict[str, list[BBox]]
# image id -> scored predictions
PredictionSet = dict[str, list[BBox]]

IMAGE_SUFFIXES = (".ppm", ".pgm", ".png", ".jpg", ".jpeg", ".bmp")

RECALL_LEVELS = tuple(i / 10.0 for i in range(11))


def parse_darknet_annotations(directory) -> GroundTruthSet:
    """Read `class cx cy w h` label lines next to each image file.

    Empty or missing label files mean zero boxes. Values outside [0, 1]
    or unparseable lines raise MalformedLine with their location.
    """
    root = Path(directory)
    truths: GroundTruthSet = {}
    images = sorted(
        p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file()
    )
    for image_path in images:
        image_id = image_path.stem
        truths[image_id] = []
        label_path = image_path.with_suffix(".txt")
        if not label_path.is_file():
            continue
        for line_no, line in enumerate(
            label_path.read_text(encoding="utf-8").splitlines(), 1
        ):
            stripped = line.strip()
            if not stripped:
                continue
            parts = stripped.split()
            if len(parts) != 5:
                raise MalformedLine(str(label_path), line_no, line, "expected 5 fields")
            try:
                class_id = int(parts[0])
                cx, cy, w, h = (float(p) for p in parts[1:])
            except ValueError as e:
                raise MalformedLine(str(label_path), line_no, line, str(e)) from e
            if class_id < 0:
                raise MalformedLine(str(label_path), line_no, line, "negative class id")
            if not all(0.0 <= v <= 1.0 for v in (cx, cy, w, h)) or w <= 0.0 or h <= 0.0:
                raise MalformedLine(
                    str(label_path), line_no, line, "coordinates outside [0, 1]"
                )
            truths[image_id].append(
                BBox(cx=cx, cy=cy, w=w, h=h, class_id=class_id, score=1.0)
            )
    return truths


def parse_predictions_ndjson(path) -> PredictionSet:
    """One prediction object per line: image_id, class_id, cx, cy, w, h, score."""
    preds: PredictionSet = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            box = BBox(
                cx=float(obj["cx"]),
                cy=float(obj["cy"]),
                w=float(obj["w"]),
                h=float(obj["h"]),
                class_id=int(obj["class_id"]),
                score=float(obj["score"]),
            )
            image_id = str(obj["image_id"])
        except (ValueError, KeyError, TypeError) as e:
            raise MalformedLine(str(path), line_no, line, str(e)) from e
        preds.setdefault(image_id, []).append(box)
    return preds


def _sorted_predictions(preds: PredictionSet) -> list[tuple[str, int, BBox]]:
    flat = [
        (image_id, idx, box)
        for image_id, boxes in preds.items()
        for idx, box in enumerate(boxes)
    ]
    flat.sort(key=lambda item: (-item[2].score, item[0], item[1]))
    return flat


def match_detections(
    preds: PredictionSet, gts: GroundTruthSet, iou_threshold: float
) -> tuple[list[tuple[str, int, bool]], int]:
    """Greedy one-to-one matching in descending score order.

    Each prediction takes the highest-IoU unmatched same-class truth in its
    image when that IoU is >= the threshold. Returns per-prediction labels
    (image_id, prediction index, is_tp) in match order, plus the FN count.
    """
    taken: dict[str, set[int]] = {image_id: set() for image_id in gts}
    labels: list[tuple[str, int, bool]] = []
    matched = 0
    for image_id, idx, box in _sorted_predictions(preds):
        truths = gts.get(image_id, [])
        best_iou = 0.0
        best_gt = -1
        for gt_idx, gt in enumerate(truths):
            if gt.class_id != box.class_id or gt_idx in taken.get(image_id, set()):
                continue
            overlap = iou(box, gt)
            if overlap >= iou_threshold and overlap > best_iou:
                best_iou = overlap
                best_gt = gt_idx
        if best_gt >= 0:
            taken.setdefault(image_id, set()).add(best_gt)
            labels.append((image_id, idx, True))
            matched += 1
        else:
            labels.append((image_id, idx, False))
    total_gt = sum(len(boxes) for boxes in gts.values())
    return labels, total_gt - matched


def precision_recall(tp: int, fp: int, fn: int) -> tuple[float, float]:
    """P = tp/(tp+fp), R = tp/(tp+fn); zero denominators yield zero."""
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    return precision, recall


def f1(precision: float, recall: float) -> float:
    """Harmonic mean; 0 when both terms vanish."""
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _class_ids(preds: PredictionSet, gts: GroundTruthSet) -> list[int]:
    ids = {b.class_id for boxes in gts.values() for b in boxes}
    ids |= {b.class_id for boxes in preds.values() for b in boxes}
    return sorted(ids)


def _filter_class(boxes_by_image: dict[str, list[BBox]], class_id: int) -> dict[str, list[BBox]]:
    return {
        image_id: [b for b in boxes if b.class_id == class_id]
        for image_id, boxes in boxes_by_image.items()
    }


def average_precision(
    preds: PredictionSet, gts: GroundTruthSet, iou_threshold: float
) -> float:
    """11-point interpolated AP over the precision/recall staircase.

    Mean over recall levels {0, 0.1, ..., 1.0} of the maximum precision at
    recall >= the level; levels beyond the reached recall contribute zero.
    """
    total_gt = sum(len(boxes) for boxes in gts.values())
    if total_gt == 0:
        return 0.0
    labels, _ = match_detections(preds, gts, iou_threshold)
    precisions: list[float] = []
    recalls: list[float] = []
    tp = 0
    for rank, (_, _, is_tp) in enumerate(labels, 1):
        if is_tp:
            tp += 1
        precisions.append(tp / rank)
        recalls.append(tp / total_gt)
    total = 0.0
    for level in RECALL_LEVELS:
        best = 0.0
        for p, r in zip(precisions, recalls):
            if r >= level and p > best:
                best = p
        total += best
    return total / len(RECALL_LEVELS)


@dataclass(frozen=True)
class EvalReport:
    """Metric bundle: mAP percent, cutoff P/R/F1, per-class AP and counts."""

    map_percent: float
    precision: float
    recall: float
    f1: float
    per_class_ap: dict[int, float] = field(default_factory=dict)
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def render(self) -> str:
        lines = [
            "mAP     Precision  Recall  F1-score",
            f"{self.map_percent:<7.2f} {self.precision:<10.2f} {self.recall:<7.2f} {self.f1:.2f}",
            f"tp={self.tp} fp={self.fp} fn={self.fn}",
        ]
        for class_id in sorted(self.per_class_ap):
            lines.append(f"class {class_id}: AP {100.0 * self.per_class_ap[class_id]:.2f}")
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps(
            {
                "map_percent": self.map_percent,
                "precision": self.precision,
                "recall": self.recall,
                "f1": self.f1,
                "per_class_ap": {str(k): v for k, v in self.per_class_ap.items()},
                "tp": self.tp,
                "fp": self.fp,
                "fn": self.fn,
            },
            ensure_ascii=False,
        )


def evaluate(
    preds: PredictionSet,
    gts: GroundTruthSet,
    iou_threshold: float = 0.5,
    score_cutoff: float = 0.25,
) -> EvalReport:
    """Full report: AP over all predictions, P/R/F1 at the confidence cutoff."""
    cut: PredictionSet = {
        image_id: [b for b in boxes if b.score >= score_cutoff]
        for image_id, boxes in preds.items()
    }
    labels, fn = match_detections(cut, gts, iou_threshold)
    tp = sum(1 for _, _, is_tp in labels if is_tp)
    fp = len(labels) - tp
    precision, recall = precision_recall(tp, fp, fn)

    per_class: dict[int, float] = {}
    gt_classes = [c for c in _class_ids(preds, gts) if any(
        b.class_id == c for boxes in gts.values() for b in boxes
    )]
    for class_id in gt_classes:
        per_class[class_id] = average_precision(
            _filter_class(preds, class_id), _filter_class(gts, class_id), iou_threshold
        )
    map_fraction = sum(per_class.values()) / len(per_class) if per_class else 0.0
    return EvalReport(
        map_percent=100.0 * map_fraction,
        precision=precision,
        recall=recall,
        f1=f1(precision, recall),
        per_class_ap=per_class,
        tp=tp,
        fp=fp,
        fn=fn,
    )


@dataclass(frozen=True)
class OcrReportRow:
    image_id: str
    characters_extracted: int
    accuracy_percent: int
    seconds: str  # rendered at 3 decimal places


def ocr_report(rows: list[tuple[str, str, str, float]]) -> list[OcrReportRow]:
    """Rows of (image_id, ground truth, predicted, duration_ms) -> table rows.

    Characters extracted counts the predicted text's graphemes; accuracy is
    char_accuracy against the ground truth; time renders in seconds, 3 d.p.
    """
    out: list[OcrReportRow] = []
    for image_id, gt_text, pred_text, duration_ms in rows:
        if not gt_text:
            raise EmptyGroundTruth(f"row {image_id!r} has empty ground truth")
        out.append(
            OcrReportRow(
                image_id=image_id,
                characters_extracted=len(graphemes(pred_text)),
                accuracy_percent=char_accuracy(gt_text, pred_text),
                seconds=f"{duration_ms / 1000.0:.3f}",
            )
        )
    return out


def render_ocr_report(rows: list[OcrReportRow]) -> str:
    header = "Image No  Characters extracted  Accuracy (%)  Time (s)"
    lines = [header]
    for row in rows:
        lines.append(
            f"{row.image_id:<9} {row.characters_extracted:<21} "
            f"{row.accuracy_percent:<13} {row.seconds}"
        )
    return "\n".join(lines)
