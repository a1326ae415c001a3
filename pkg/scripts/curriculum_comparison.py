"""Circular curriculum vs uniform shuffle: steps to reach the uniform
run's plateau loss.

For each seed, trains the same model twice on the same corpus - once
with the circular curriculum schedule, once with the uniform (single
bucket) baseline - and measures when each run's trailing-window median
training loss first reaches L*, the median loss of the uniform run's
final quartile. Reports per-seed step counts and the ratio of the seed
means; the curriculum helps when the ratio is well below 1.

Example:
    python scripts/curriculum_comparison.py --data-dir data/hard_300 \
        --cycles 12 --seeds 0,1,2
"""

import argparse
import csv
import json
import statistics
from pathlib import Path

from textspot.config import RunConfig, TrainConfig
from textspot.model import ModelConfig
from textspot.train import train_loop


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data-dir", type=Path, required=True)
    ap.add_argument("--cycles", type=int, default=12)
    ap.add_argument("--batch-size", type=int, default=4)
    ap.add_argument("--buckets", type=int, default=4)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--gamma", type=float, default=0.9)
    ap.add_argument("--embed-dim", type=int, default=64)
    ap.add_argument("--layers", type=int, default=2)
    ap.add_argument("--heads", type=int, default=4)
    ap.add_argument("--queries", type=int, default=5)
    ap.add_argument("--conv", default="24")
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--window", type=int, default=25)
    ap.add_argument("--out-prefix", type=Path, default=Path("/tmp/curr"))
    return ap.parse_args()


def losses_of(path) -> list[float]:
    with open(path) as f:
        return [float(row["loss"]) for row in csv.DictReader(f)]


def crossing(losses: list[float], lstar: float, window: int) -> int | None:
    """1-based index of the first step whose trailing-window median
    is <= lstar; None if never reached."""
    buf = []
    for i, v in enumerate(losses):
        buf.append(v)
        if len(buf) > window:
            buf.pop(0)
        if len(buf) == window and statistics.median(buf) <= lstar:
            return i + 1
    return None


def main():
    args = parse_args()
    model = ModelConfig(embed_dim=args.embed_dim, n_queries=args.queries,
                        layers=args.layers, heads=args.heads, refine_r=1,
                        conv_channels=tuple(
                            int(c) for c in args.conv.split(",")))
    rows = []
    for seed in (int(s) for s in args.seeds.split(",")):
        res = {}
        for uniform in (True, False):
            cfg = RunConfig(model=model,
                            train=TrainConfig(batch_size=args.batch_size,
                                              bucket_count=args.buckets,
                                              cycle_count=args.cycles,
                                              base_lr=args.lr,
                                              gamma=args.gamma, seed=seed))
            out = Path(f"{args.out_prefix}_{'u' if uniform else 'c'}_{seed}.echo")
            train_loop(cfg, args.data_dir, out, uniform=uniform)
            res["u" if uniform else "c"] = losses_of(f"{out}.loss.csv")
        ul, cl = res["u"], res["c"]
        lstar = statistics.median(ul[3 * len(ul) // 4:])
        su = crossing(ul, lstar, args.window)
        sc = crossing(cl, lstar, args.window)
        rows.append({"seed": seed, "lstar": round(lstar, 4),
                     "cross_uniform": su, "cross_curriculum": sc,
                     "ratio": round(sc / su, 3) if su and sc else None})
        print(json.dumps(rows[-1]), flush=True)

    if all(r["cross_uniform"] and r["cross_curriculum"] for r in rows):
        mu = sum(r["cross_uniform"] for r in rows) / len(rows)
        mc = sum(r["cross_curriculum"] for r in rows) / len(rows)
        print(json.dumps({"mean_cross_uniform": round(mu, 1),
                          "mean_cross_curriculum": round(mc, 1),
                          "ratio_of_means": round(mc / mu, 3)}))
    else:
        print(json.dumps({"verdict": "a run never reached L*"}))


if __name__ == "__main__":
    main()
