"""Single-image prediction and overlay rendering.

Every query yields a prediction entry; location (point and polygon) is
read off the refined attention map, text off the character logits. A
minimum-confidence cut is available for analysis, but by default all
entries are emitted - evaluation applies its own threshold.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from . import tensor as T
from .charset import decode_indices
from .localize import (DegenerateMapError, attention_mask, attention_point,
                       mask_to_polygon)
from .model import ModelConfig, forward, load_model
from .synth import load_png

OVERLAY_COLORS = [(255, 64, 64), (64, 160, 255), (64, 220, 96),
                  (255, 200, 0), (220, 80, 255), (0, 200, 200)]


def predict_instances(image: np.ndarray, params: dict, config: ModelConfig,
                      r: int | None = None,
                      min_confidence: float = 0.0) -> list[dict]:
    """Prediction dicts sorted by descending confidence.

    Each dict: query_id, text, confidence, point [x, y], polygon
    [[x, y], ...] in image pixels.
    """
    preds = forward(T.Tensor(image), params, config, r=r)
    grid = preds[0].attention_map.data.shape[0]
    scale = image.shape[0] / grid
    out = []
    for p in preds:
        confidence = p.confidence.item()
        if confidence < min_confidence:
            continue
        amap = p.refined_map.data
        try:
            point = attention_point(amap, config.alpha, scale=scale)
            polygon = mask_to_polygon(attention_mask(amap, config.alpha,
                                                     scale=scale))
        except DegenerateMapError:
            continue  # all-flat map carries no location signal
        out.append({
            "query_id": p.query_id,
            "text": decode_indices(np.argmax(p.char_logits.data, axis=1)),
            "confidence": confidence,
            "point": [point[0], point[1]],
            "polygon": [[x, y] for x, y in polygon],
        })
    out.sort(key=lambda e: (-e["confidence"], e["query_id"]))
    return out


def predict_file(image_path: Path | str, model_path: Path | str,
                 out_path: Path | str, overlay_path: Path | str | None = None,
                 min_confidence: float = 0.0, r: int | None = None) -> int:
    """Run one image through a saved model; write predictions JSONL.

    Lines carry image_id (the file stem) plus the predict_instances
    fields, so the output feeds metrics.load_predictions directly.
    Returns the number of predictions written.
    """
    params, config = load_model(model_path)
    image = load_png(image_path)
    image_id = Path(image_path).stem
    instances = predict_instances(image, params, config, r=r,
                                  min_confidence=min_confidence)
    with open(out_path, "w") as f:
        for inst in instances:
            f.write(json.dumps({"image_id": image_id, **inst}) + "\n")
    if overlay_path is not None:
        render_overlay(image, instances, overlay_path)
    return len(instances)


def render_overlay(image: np.ndarray, instances: list[dict],
                   out_path: Path | str) -> None:
    """Draw polygon outlines and point crosses over the grayscale image."""
    base = np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)
    img = Image.fromarray(base, mode="L").convert("RGB")
    draw = ImageDraw.Draw(img)
    for i, inst in enumerate(instances):
        color = OVERLAY_COLORS[i % len(OVERLAY_COLORS)]
        poly = [tuple(pt) for pt in inst["polygon"]]
        if len(poly) >= 2:
            draw.line(poly + [poly[0]], fill=color, width=1)
        x, y = inst["point"]
        draw.line([(x - 3, y), (x + 3, y)], fill=color, width=1)
        draw.line([(x, y - 3), (x, y + 3)], fill=color, width=1)
    img.save(out_path, format="PNG")


def predict_directory(images_dir: Path | str, params: dict,
                      config: ModelConfig, r: int | None = None,
                      min_confidence: float = 0.0) -> dict[str, list[dict]]:
    """Predictions for every PNG in a directory, keyed by image id."""
    out = {}
    for png in sorted(Path(images_dir).glob("*.png")):
        out[png.stem] = predict_instances(load_png(png), params, config, r=r,
                                          min_confidence=min_confidence)
    return out
