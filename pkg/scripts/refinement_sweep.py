"""Coarse-to-fine sweep: one R=2 model per seed, evaluated at r=0,1,2.

For each seed, trains a model with two refinement stages, then runs
held-out inference three times with the refinement depth overridden to
0, 1, and 2, reporting the mean point-in-polygon accuracy per depth.
This is the desk-scale version of the refinement ablation: accuracy
should climb from r=0 to r=1 and not collapse at r=2.

Example:
    python scripts/refinement_sweep.py --train-dir data/train_500 \
        --test-dir data/test_100 --cycles 8 --seeds 0,1,2
"""

import argparse
import json
import time
from pathlib import Path

from textspot.config import RunConfig, TrainConfig
from textspot.inference import predict_directory
from textspot.metrics import load_gt, point_in_polygon
from textspot.model import ModelConfig, load_model
from textspot.train import train_loop


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--train-dir", type=Path, required=True)
    ap.add_argument("--test-dir", type=Path, required=True)
    ap.add_argument("--cycles", type=int, default=8)
    ap.add_argument("--batch-size", type=int, default=4)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--gamma", type=float, default=0.97)
    ap.add_argument("--conv", default="16,32")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--out-prefix", type=Path, default=Path("/tmp/c2f"))
    return ap.parse_args()


def in_poly_pct(preds: dict, gt: dict) -> float:
    hits = 0
    for image_id, insts in gt.items():
        plist = preds.get(image_id, [])
        if not plist:
            continue
        top = max(plist, key=lambda p: p["confidence"])
        poly = [tuple(p) for p in insts[0]["polygon"]]
        hits += point_in_polygon(tuple(top["point"]), poly)
    return 100.0 * hits / len(gt)


def main():
    args = parse_args()
    gt = load_gt(args.test_dir / "gt.jsonl")
    acc = {0: [], 1: [], 2: []}
    for seed in (int(s) for s in args.seeds.split(",")):
        run = RunConfig(
            model=ModelConfig(refine_r=2,
                              conv_channels=tuple(
                                  int(c) for c in args.conv.split(","))),
            train=TrainConfig(batch_size=args.batch_size,
                              cycle_count=args.cycles, base_lr=args.lr,
                              gamma=args.gamma, seed=seed))
        out = Path(f"{args.out_prefix}_{seed}.echo")
        t0 = time.time()
        train_loop(run, args.train_dir, out)
        params, mcfg = load_model(out)
        row = {"seed": seed, "train_s": round(time.time() - t0, 1)}
        for r in (0, 1, 2):
            preds = predict_directory(args.test_dir / "images", params,
                                      mcfg, r=r)
            acc[r].append(in_poly_pct(preds, gt))
            row[f"r{r}"] = round(acc[r][-1], 1)
        print(json.dumps(row), flush=True)

    mean = {r: sum(v) / len(v) for r, v in acc.items()}
    print(json.dumps({
        "mean_r0": round(mean[0], 2), "mean_r1": round(mean[1], 2),
        "mean_r2": round(mean[2], 2),
        "r1_minus_r0": round(mean[1] - mean[0], 2),
        "r2_minus_r1": round(mean[2] - mean[1], 2)}))


if __name__ == "__main__":
    main()
