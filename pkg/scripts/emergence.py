"""Emergent-localization experiment: transcription-only training, then
held-out localization + transcription metrics.

Trains on one synthetic corpus (images + transcription annotations;
geometry never enters the loss) and reports, on a held-out corpus:

- in_poly: % of images whose top-confidence predicted point falls
  inside the ground-truth polygon (read from gt.jsonl, eval only);
- point-metric F-score without and with the full lexicon.

Example:
    python scripts/emergence.py --train-dir data/train_2000 \
        --test-dir data/test_200 --cycles 15 --out /tmp/spotter.echo
"""

import argparse
import csv
import json
import statistics
import time
from pathlib import Path

from textspot.config import RunConfig, TrainConfig
from textspot.inference import predict_directory
from textspot.metrics import EvalConfig, evaluate_e2e, load_gt, point_in_polygon
from textspot.model import ModelConfig, load_model
from textspot.train import train_loop


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--train-dir", type=Path, required=True)
    ap.add_argument("--test-dir", type=Path, required=True)
    ap.add_argument("--out", type=Path, default=Path("/tmp/emergence.echo"))
    ap.add_argument("--cycles", type=int, default=15)
    ap.add_argument("--batch-size", type=int, default=4)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--gamma", type=float, default=0.97)
    ap.add_argument("--alpha", type=float, default=0.3)
    ap.add_argument("--conv", default="24",
                    help="comma list of intermediate conv widths")
    ap.add_argument("--seed", type=int, default=0)
    return ap.parse_args()


def in_poly_fraction(preds: dict, gt: dict) -> tuple[int, int]:
    hits = 0
    for image_id, insts in gt.items():
        plist = preds.get(image_id, [])
        if not plist:
            continue
        top = max(plist, key=lambda p: p["confidence"])
        poly = [tuple(p) for p in insts[0]["polygon"]]
        hits += point_in_polygon(tuple(top["point"]), poly)
    return hits, len(gt)


def main():
    args = parse_args()
    run = RunConfig(
        model=ModelConfig(alpha=args.alpha,
                          conv_channels=tuple(
                              int(c) for c in args.conv.split(","))),
        train=TrainConfig(batch_size=args.batch_size, cycle_count=args.cycles,
                          base_lr=args.lr, gamma=args.gamma, seed=args.seed))
    t0 = time.time()
    train_loop(run, args.train_dir, args.out)
    train_s = time.time() - t0

    with open(f"{args.out}.loss.csv") as f:
        losses = [float(row["loss"]) for row in csv.DictReader(f)]

    params, mcfg = load_model(args.out)
    preds = predict_directory(args.test_dir / "images", params, mcfg)
    gt = load_gt(args.test_dir / "gt.jsonl")
    hits, total = in_poly_fraction(preds, gt)
    words = sorted({inst["text"] for insts in gt.values() for inst in insts})
    rep_none = evaluate_e2e(preds, gt, EvalConfig(mode="point",
                                                  lexicon_mode="none",
                                                  image_size=64))
    rep_full = evaluate_e2e(preds, gt, EvalConfig(mode="point",
                                                  lexicon_mode="full",
                                                  lexicon=words,
                                                  image_size=64))
    print(json.dumps({
        "steps": len(losses), "train_s": round(train_s, 1),
        "median_final_loss": round(statistics.median(
            losses[-max(1, len(losses) // 10):]), 4),
        "in_poly": f"{hits}/{total}",
        "f_none": round(rep_none.fscore, 3),
        "f_full": round(rep_full.fscore, 3),
        "model": str(args.out),
    }))


if __name__ == "__main__":
    main()
