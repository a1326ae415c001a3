"""Curriculum training from transcription-only annotations.

The loop reads images, annotations.jsonl, and the difficulty scores in
meta.json - never gt.jsonl. Geometry plays no role in supervision; any
localization the model exhibits is emergent.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from pathlib import Path

import numpy as np

from . import tensor as T
from .annotate import latest_by_image, parse_annotations
from .config import RunConfig
from .curriculum import (CurriculumSchedule, bucketize, build_schedule,
                         dump_schedule, uniform_schedule)
from .matching import spotting_loss
from .model import forward, init_params, save_model
from .optim import Adam
from .rng import Rng, derive_seed
from .synth import load_png

logger = logging.getLogger(__name__)


class DataError(RuntimeError):
    """Training data directory is missing required pieces."""


def load_training_data(data_dir: Path | str):
    """(images, texts, difficulty) keyed by image id.

    Difficulty comes from meta.json when present (scalar curriculum
    metadata, no geometry); otherwise every sample scores 0.0, which
    collapses the curriculum into a single bucket.
    """
    data = Path(data_dir)
    ann_path = data / "annotations.jsonl"
    if not ann_path.exists():
        raise DataError(f"missing annotations file {ann_path}")
    records = latest_by_image(parse_annotations(ann_path))
    if not records:
        raise DataError(f"{ann_path} holds no records")

    images, texts = {}, {}
    for image_id in sorted(records):
        png = data / "images" / f"{image_id}.png"
        if not png.exists():
            raise DataError(f"missing image {png}")
        images[image_id] = load_png(png)
        texts[image_id] = list(records[image_id].texts)

    difficulty = {image_id: 0.0 for image_id in records}
    meta_path = data / "meta.json"
    if meta_path.exists():
        scores = json.loads(meta_path.read_text()).get("difficulty", {})
        difficulty = {image_id: float(scores.get(image_id, 0.0))
                      for image_id in records}
    return images, texts, difficulty


def shift_image(image: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Translate by (dx, dy) pixels, extending edge values into the gap."""
    pad = max(abs(dx), abs(dy))
    if pad == 0:
        return image
    h, w = image.shape
    padded = np.pad(image, pad, mode="edge")
    return padded[pad - dy:pad - dy + h, pad - dx:pad - dx + w]


def _truncate_cycles(schedule: CurriculumSchedule,
                     steps_per_cycle: int) -> CurriculumSchedule:
    kept, seen = [], {}
    for step in schedule.steps:
        seen[step.cycle] = seen.get(step.cycle, 0) + 1
        if seen[step.cycle] <= steps_per_cycle:
            kept.append(step)
    return CurriculumSchedule(kept, schedule.bucket_count,
                              schedule.cycle_count, schedule.base_lr,
                              schedule.gamma, schedule.buckets)


def build_training_schedule(run_config: RunConfig, difficulty: dict,
                            uniform: bool = False) -> CurriculumSchedule:
    t = run_config.train
    if uniform:
        schedule = uniform_schedule(sorted(difficulty), t.cycle_count,
                                    t.base_lr, t.gamma, t.seed)
    else:
        buckets = bucketize(difficulty, t.bucket_count)
        schedule = build_schedule(buckets, t.bucket_count, t.cycle_count,
                                  t.base_lr, t.gamma, t.seed)
    if t.steps_per_cycle is not None:
        schedule = _truncate_cycles(schedule, t.steps_per_cycle)
    return schedule


def train_loop(run_config: RunConfig, data_dir: Path | str,
               model_out: Path | str, loss_csv: Path | str | None = None,
               schedule_out: Path | str | None = None,
               uniform: bool = False) -> Path:
    """Run the full schedule and save the model; returns the model path.

    Loss is logged per schedule step to loss_csv (default: alongside the
    model as <model>.loss.csv) with columns step, cycle, lr, loss.
    """
    images, texts, difficulty = load_training_data(data_dir)
    schedule = build_training_schedule(run_config, difficulty, uniform=uniform)
    if schedule_out is not None:
        dump_schedule(schedule, schedule_out)

    model_cfg = run_config.model
    t = run_config.train
    params = init_params(model_cfg, t.seed)
    opt = Adam(params, lr=t.base_lr)

    rows = []
    pending = 0
    last_lr = t.base_lr
    started = time.perf_counter()
    for i, step in enumerate(schedule.steps):
        image = images[step.sample_id]
        if t.aug_shift > 0 or t.aug_noise > 0.0:
            rng = Rng(derive_seed(t.seed, "augment", i))
            if t.aug_shift > 0:
                # random translation: transcription supervision is
                # position-free, so shifted copies are fresh training
                # signal that counters spatial memorization
                dx = rng.randint(2 * t.aug_shift + 1) - t.aug_shift
                dy = rng.randint(2 * t.aug_shift + 1) - t.aug_shift
                image = shift_image(image, dx, dy)
            if t.aug_noise > 0.0:
                # fresh additive noise per presentation (same model as
                # the synth background noise): one rendering's pixels
                # are never seen twice
                image = np.clip(image + t.aug_noise
                                * rng.uniform(0.0, 1.0, image.shape),
                                0.0, 1.0)
        preds = forward(T.Tensor(image), params, model_cfg)
        loss, _ = spotting_loss(preds, texts[step.sample_id], lam=t.lam)
        T.backward(loss)
        pending += 1
        last_lr = step.lr
        if pending == t.batch_size:
            opt.step(lr=step.lr)
            opt.zero_grad()
            pending = 0
        rows.append((i, step.cycle, step.lr, loss.item()))
        if (i + 1) % 500 == 0:
            recent = [r[3] for r in rows[-500:]]
            logger.info("step %d/%d cycle %d loss %.4f (%.1fs)",
                        i + 1, len(schedule.steps), step.cycle,
                        sum(recent) / len(recent),
                        time.perf_counter() - started)
    if pending:
        opt.step(lr=last_lr)
        opt.zero_grad()

    model_out = Path(model_out)
    model_out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model_out, params, model_cfg)

    csv_path = Path(loss_csv) if loss_csv is not None else \
        model_out.with_suffix(model_out.suffix + ".loss.csv")
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "cycle", "lr", "loss"])
        writer.writerows(rows)
    return model_out
