"""Independent reference implementations used as test oracles.

Everything here is deliberately scalar, exhaustive pure Python — slower and
structurally unlike the production code paths it checks.
"""

from __future__ import annotations

import math
import sys
from fractions import Fraction

from alpr.geometry import BBox, DetectorHeadSpec


# ---- Otsu: exhaustive 256-threshold scan in exact rational arithmetic ----

def otsu_bruteforce(bins: list[int]) -> int:
    """Smallest t maximizing w0*w1*(mu0-mu1)^2, evaluated with Fractions."""
    n = sum(bins)
    best_t = -1
    best_val = Fraction(-1)
    for t in range(256):
        w0 = sum(bins[: t + 1])
        w1 = n - w0
        if w0 == 0 or w1 == 0:
            continue
        mu0 = Fraction(sum(i * bins[i] for i in range(t + 1)), w0)
        mu1 = Fraction(sum(i * bins[i] for i in range(t + 1, 256)), w1)
        val = Fraction(w0) * Fraction(w1) * (mu0 - mu1) ** 2
        if val > best_val:
            best_val = val
            best_t = t
    return best_t


# ---- NMS: quadratic greedy suppression with its own IoU ----

def _iou_corners(a: BBox, b: BBox) -> float:
    ax1, ay1 = a.cx - a.w / 2.0, a.cy - a.h / 2.0
    ax2, ay2 = a.cx + a.w / 2.0, a.cy + a.h / 2.0
    bx1, by1 = b.cx - b.w / 2.0, b.cy - b.h / 2.0
    bx2, by2 = b.cx + b.w / 2.0, b.cy + b.h / 2.0
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union if union > 0.0 else 0.0


def nms_oracle(boxes: list[BBox], threshold: float) -> list[BBox]:
    remaining = list(enumerate(boxes))
    kept: list[BBox] = []
    while remaining:
        best_pos = 0
        for pos in range(1, len(remaining)):
            bi, bb = remaining[pos]
            ki, kb = remaining[best_pos]
            if bb.score > kb.score or (bb.score == kb.score and bi < ki):
                best_pos = pos
        _, winner = remaining.pop(best_pos)
        kept.append(winner)
        remaining = [
            (i, b)
            for i, b in remaining
            if b.class_id != winner.class_id or _iou_corners(winner, b) <= threshold
        ]
    return kept


# ---- Detector head: per-element scalar decode ----

def _sigmoid_scalar(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def decode_reference(raw: list[float], spec: DetectorHeadSpec, conf: float) -> list[BBox]:
    s, a = spec.grid_size, spec.anchor_count
    v = 5 + spec.class_count
    assert len(raw) == s * s * a * v
    boxes: list[BBox] = []
    for i in range(s):
        for j in range(s):
            for k in range(a):
                base = ((i * s + j) * a + k) * v
                tx, ty, tw, th, tobj = raw[base : base + 5]
                cls_logits = raw[base + 5 : base + v]
                best_cls = 0
                for c in range(1, len(cls_logits)):
                    if cls_logits[c] > cls_logits[best_cls]:
                        best_cls = c
                score = _sigmoid_scalar(tobj) * _sigmoid_scalar(cls_logits[best_cls])
                if score < conf:
                    continue
                cx = (_sigmoid_scalar(tx) + j) / s
                cy = (_sigmoid_scalar(ty) + i) / s
                w = spec.anchors[k][0] * math.exp(min(tw, 700.0)) / spec.input_width
                h = spec.anchors[k][1] * math.exp(min(th, 700.0)) / spec.input_height
                boxes.append(
                    BBox(
                        cx=min(max(cx, 0.0), 1.0),
                        cy=min(max(cy, 0.0), 1.0),
                        w=min(max(w, 1e-12), 1.0),
                        h=min(max(h, 1e-12), 1.0),
                        class_id=best_cls,
                        score=score,
                    )
                )
    return boxes


# ---- Detection evaluation: scalar matcher + 11-point staircase ----

def _flatten_sorted(by_image, keep):
    flat = []
    for image_id in by_image:
        for idx, box in enumerate(by_image[image_id]):
            if keep(box):
                flat.append((image_id, idx, box))
    flat.sort(key=lambda t: (-t[2].score, t[0], t[1]))
    return flat


def _greedy_outcomes(flat_preds, gts, iou_threshold):
    used: dict[tuple[str, int], bool] = {}
    outcomes = []
    for image_id, _, box in flat_preds:
        best_gt, best_ov = -1, 0.0
        for gi, gt in enumerate(gts.get(image_id, [])):
            if gt.class_id != box.class_id or used.get((image_id, gi)):
                continue
            ov = _iou_corners(box, gt)
            if ov >= iou_threshold and ov > best_ov:
                best_gt, best_ov = gi, ov
        if best_gt >= 0:
            used[(image_id, best_gt)] = True
            outcomes.append(True)
        else:
            outcomes.append(False)
    return outcomes


def evaluate_reference(preds, gts, iou_threshold, cutoff):
    """Returns (map_percent, precision, recall, f1, tp, fp, fn)."""
    total_gt = sum(len(v) for v in gts.values())
    cut_outcomes = _greedy_outcomes(
        _flatten_sorted(preds, lambda b: b.score >= cutoff), gts, iou_threshold
    )
    tp = sum(cut_outcomes)
    fp = len(cut_outcomes) - tp
    fn = total_gt - tp
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0

    classes = sorted({b.class_id for v in gts.values() for b in v})
    aps = []
    for cls in classes:
        cls_gts = {k: [b for b in v if b.class_id == cls] for k, v in gts.items()}
        cls_total = sum(len(v) for v in cls_gts.values())
        if cls_total == 0:
            continue
        cls_preds = {k: [b for b in v if b.class_id == cls] for k, v in preds.items()}
        outcomes = _greedy_outcomes(
            _flatten_sorted(cls_preds, lambda b: True), cls_gts, iou_threshold
        )
        points = []
        hits = 0
        for rank, ok in enumerate(outcomes, 1):
            if ok:
                hits += 1
            points.append((hits / rank, hits / cls_total))
        ap = 0.0
        for level in [i / 10.0 for i in range(11)]:
            best = 0.0
            for p, r in points:
                if r >= level and p > best:
                    best = p
            ap += best
        aps.append(ap / 11.0)
    map_percent = 100.0 * (sum(aps) / len(aps)) if aps else 0.0
    return map_percent, precision, recall, f1, tp, fp, fn


# ---- Character accuracy: top-down recursion over grapheme lists ----

def char_accuracy_oracle(gt: list[str], pred: list[str]) -> int:
    """round(100 * matches / len(gt)) maximizing matches among minimum-cost
    alignments; memoized recursion, counterpart of the iterative DP."""
    assert gt
    sys.setrecursionlimit(10000)
    memo: dict[tuple[int, int], tuple[int, int]] = {}

    def best(i: int, j: int) -> tuple[int, int]:
        # (cost, -matches) aligning gt[i:] with pred[j:]
        if (i, j) in memo:
            return memo[(i, j)]
        if i == len(gt):
            result = (len(pred) - j, 0)
        elif j == len(pred):
            result = (len(gt) - i, 0)
        else:
            match = gt[i] == pred[j]
            c_diag, m_diag = best(i + 1, j + 1)
            result = (c_diag + (0 if match else 1), m_diag - (1 if match else 0))
            c_del, m_del = best(i + 1, j)
            result = min(result, (c_del + 1, m_del))
            c_ins, m_ins = best(i, j + 1)
            result = min(result, (c_ins + 1, m_ins))
        memo[(i, j)] = result
        return result

    matches = -best(0, 0)[1]
    n = len(gt)
    return (200 * matches + n) // (2 * n)
