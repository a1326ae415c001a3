"""Evaluation protocols: polygon-IoU and single-point spotting metrics.

Geometric matching is rasterized (robust to the non-convex polygons
curved text produces), recognition is compared after optional lexicon
correction, and precision/recall are tallied corpus-wide over
per-image one-to-one greedy matches in descending confidence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class AlignmentError(ValueError):
    """Prediction stream references an image the GT stream lacks."""


class PolygonError(ValueError):
    """A polygon with fewer than 3 vertices cannot be rasterized."""


@dataclass
class EvalConfig:
    mode: str = "point"               # "point" or "polygon"
    iou_threshold: float = 0.5
    lexicon_mode: str = "none"        # "none" or "full"
    lexicon: list[str] | None = None
    image_size: int = 64
    raster_size: int | None = None    # None = native image size

    def __post_init__(self):
        if self.mode not in ("point", "polygon"):
            raise ValueError(f"unknown metric mode {self.mode!r}")
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValueError("iou_threshold must be in (0, 1]")
        if self.lexicon_mode not in ("none", "full"):
            raise ValueError(f"unknown lexicon mode {self.lexicon_mode!r}")
        if self.lexicon_mode == "full" and not self.lexicon:
            raise ValueError("lexicon_mode='full' requires a lexicon")


@dataclass
class EvalReport:
    precision: float
    recall: float
    fscore: float
    matches: list[tuple[str, int, int]] = field(default_factory=list)
    per_image: dict[str, dict[str, int]] = field(default_factory=dict)


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance with unit insert/delete/substitute costs."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1,
                           cur[j - 1] + 1,
                           prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def lexicon_correct(pred: str, lexicon) -> str:
    """Nearest lexicon word by edit distance; ties go lexicographically."""
    if not lexicon:
        return pred
    return min(lexicon, key=lambda w: (edit_distance(pred, w), w))


def _rasterize(poly, nx: int, ny: int, sx: float = 1.0, sy: float = 1.0) -> np.ndarray:
    """Even-odd fill test at every cell center ((j+.5)sx, (i+.5)sy)."""
    if len(poly) < 3:
        raise PolygonError(f"polygon needs >=3 vertices, got {len(poly)}")
    xc = (np.arange(nx) + 0.5) * sx          # (nx,)
    yc = (np.arange(ny) + 0.5) * sy          # (ny,)
    inside = np.zeros((ny, nx), dtype=bool)
    n = len(poly)
    for k in range(n):
        x1, y1 = poly[k]
        x2, y2 = poly[(k + 1) % n]
        crosses = (y1 > yc) != (y2 > yc)     # (ny,)
        if not crosses.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            cx = x1 + (yc - y1) * (x2 - x1) / (y2 - y1)
        flip = crosses[:, None] & (xc[None, :] < cx[:, None])
        inside ^= flip
    return inside


def raster_iou(poly_a, poly_b, width: int, height: int) -> float:
    """IoU of even-odd rasterizations on a width x height unit-cell grid."""
    a = _rasterize(poly_a, width, height)
    b = _rasterize(poly_b, width, height)
    union = int((a | b).sum())
    if union == 0:
        return 0.0
    return int((a & b).sum()) / union


def point_in_polygon(p, poly) -> bool:
    """Even-odd rule; points on an edge or vertex count as inside."""
    x, y = p
    inside = False
    n = len(poly)
    for k in range(n):
        x1, y1 = poly[k]
        x2, y2 = poly[(k + 1) % n]
        # boundary-inclusive: on-segment check with a small tolerance
        ex, ey = x2 - x1, y2 - y1
        seg2 = ex * ex + ey * ey
        if seg2 == 0.0:
            if abs(x - x1) < 1e-9 and abs(y - y1) < 1e-9:
                return True
            continue
        t = ((x - x1) * ex + (y - y1) * ey) / seg2
        if 0.0 <= t <= 1.0:
            dx, dy = x - (x1 + t * ex), y - (y1 + t * ey)
            if dx * dx + dy * dy < 1e-18:
                return True
        if (y1 > y) != (y2 > y) and x < x1 + (y - y1) * (x2 - x1) / (y2 - y1):
            inside = not inside
    return inside


def _poly_centroid(poly) -> tuple[float, float]:
    xs = [p[0] for p in poly]
    ys = [p[1] for p in poly]
    return (sum(xs) / len(poly), sum(ys) / len(poly))


def _match_image(preds, gts, cfg: EvalConfig):
    """Greedy one-to-one matching for one image.

    Predictions are taken in descending confidence. Each chooses one
    unmatched GT by the geometric rule alone (point mode: containing
    polygon with nearest vertex centroid; polygon mode: highest IoU at
    or above threshold); the pair then counts as a match only if the
    lexicon-corrected text agrees, and either way the choice is final
    for that prediction.
    """
    lexicon = cfg.lexicon if cfg.lexicon_mode == "full" else None
    raster = cfg.raster_size or cfg.image_size
    cell = cfg.image_size / raster

    considered = [(i, p) for i, p in enumerate(preds)
                  if p["confidence"] >= 0.5]
    considered.sort(key=lambda ip: -ip[1]["confidence"])
    taken = [False] * len(gts)
    matches = []
    for pred_idx, pred in considered:
        candidates = []
        for g_idx, gt in enumerate(gts):
            if taken[g_idx]:
                continue
            if cfg.mode == "point":
                if point_in_polygon(pred["point"], gt["polygon"]):
                    cx, cy = _poly_centroid(gt["polygon"])
                    px, py = pred["point"]
                    d = (px - cx) ** 2 + (py - cy) ** 2
                    candidates.append((d, gt["text"], g_idx))
            else:
                iou = raster_iou(
                    [(x / cell, y / cell) for x, y in pred["polygon"]],
                    [(x / cell, y / cell) for x, y in gt["polygon"]],
                    raster, raster)
                if iou >= cfg.iou_threshold:
                    candidates.append((-iou, gt["text"], g_idx))
        if not candidates:
            continue
        _, gt_text, g_idx = min(candidates)
        text = lexicon_correct(pred["text"], lexicon)
        if text.upper() == gt_text.upper():
            taken[g_idx] = True
            matches.append((pred_idx, g_idx))
    return matches, len(considered)


def evaluate_e2e(preds_by_image: dict, gt_by_image: dict, cfg: EvalConfig) -> EvalReport:
    """Corpus precision/recall/F over per-image one-to-one matches.

    preds_by_image: image id -> list of {text, confidence, point, polygon}.
    gt_by_image: image id -> list of {text, polygon}. Images missing
    from the prediction stream count as zero predictions; prediction
    ids absent from GT raise AlignmentError.
    """
    unknown = set(preds_by_image) - set(gt_by_image)
    if unknown:
        raise AlignmentError(
            f"predictions reference unknown image ids: {sorted(unknown)}")

    total_matches = total_preds = total_gt = 0
    match_list = []
    per_image = {}
    for image_id in sorted(gt_by_image):
        gts = gt_by_image[image_id]
        preds = preds_by_image.get(image_id, [])
        matches, n_considered = _match_image(preds, gts, cfg)
        total_matches += len(matches)
        total_preds += n_considered
        total_gt += len(gts)
        per_image[image_id] = {"matched": len(matches),
                               "preds": n_considered, "gt": len(gts)}
        match_list.extend((image_id, pi, gi) for pi, gi in matches)

    precision = total_matches / total_preds if total_preds else 0.0
    recall = total_matches / total_gt if total_gt else 0.0
    fscore = (2 * precision * recall / (precision + recall)
              if precision + recall > 0 else 0.0)
    return EvalReport(precision, recall, fscore, match_list, per_image)


# ---------------------------------------------------------------------------
# file interfaces


def load_predictions(path: Path | str) -> dict[str, list[dict]]:
    """JSONL {image_id, text, confidence, point, polygon} -> per-image lists."""
    out: dict[str, list[dict]] = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        out.setdefault(rec["image_id"], []).append(rec)
    return out


def load_gt(path: Path | str) -> dict[str, list[dict]]:
    """gt.jsonl from the synthetic generator -> per-image instance lists."""
    out: dict[str, list[dict]] = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        out[rec["image_id"]] = rec["instances"]
    return out


def load_lexicon(path: Path | str) -> list[str]:
    """Plain text lexicon, one word per line, upper-cased."""
    return [w.strip().upper() for w in Path(path).read_text().splitlines()
            if w.strip()]
