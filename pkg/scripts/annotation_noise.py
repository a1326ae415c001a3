"""Audio-annotation parity under recognizer noise: train the same model
from clean and from noise-corrupted speech transcriptions and compare
held-out F-scores.

The corpus's own transcriptions are turned into a word-mode mock STT
fixture (one spoken word per text). The clean condition runs them
through the deterministic mock recognizer; the noisy condition wraps
it in NoisySttClient, which substitutes each character with the given
probability. Both conditions train from the resulting annotation logs
alone; the report is the held-out point-metric F (full lexicon) for
each and the degradation in points.

Example:
    python scripts/annotation_noise.py --train-dir data/train_800 \
        --test-dir data/test_200 --rate 0.05 --cycles 10
"""

import argparse
import json
import shutil
import time
from pathlib import Path

from textspot.annotate import (MockSttClient, NoisySttClient, annotate_audio,
                               latest_by_image, parse_annotations)
from textspot.config import RunConfig, TrainConfig
from textspot.inference import predict_directory
from textspot.metrics import EvalConfig, evaluate_e2e, load_gt
from textspot.model import ModelConfig, load_model
from textspot.train import train_loop


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--train-dir", type=Path, required=True)
    ap.add_argument("--test-dir", type=Path, required=True)
    ap.add_argument("--work-dir", type=Path, default=Path("/tmp/ann_noise"))
    ap.add_argument("--rate", type=float, default=0.05)
    ap.add_argument("--cycles", type=int, default=10)
    ap.add_argument("--batch-size", type=int, default=4)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--gamma", type=float, default=0.97)
    ap.add_argument("--conv", default="24")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--noise-seed", type=int, default=7)
    return ap.parse_args()


def spoken_corpus(src: Path, work: Path, client) -> Path:
    """Corpus copy whose annotations come from the given STT client."""
    work.mkdir(parents=True, exist_ok=True)
    images = work / "images"
    if not images.exists():
        images.symlink_to((src / "images").resolve())
    if (src / "meta.json").exists():
        shutil.copyfile(src / "meta.json", work / "meta.json")

    audio = work / "audio"
    audio.mkdir(exist_ok=True)
    records = latest_by_image(parse_annotations(src / "annotations.jsonl"))
    fixture = work / "fixture.jsonl"
    with open(fixture, "w", encoding="utf-8") as f:
        for image_id, rec in sorted(records.items()):
            (audio / f"{image_id}.wav").touch()
            f.write(json.dumps({"audio": f"{image_id}.wav",
                                "tokens": list(rec.texts)}) + "\n")
    out = work / "annotations.jsonl"
    out.unlink(missing_ok=True)
    annotate_audio(audio, "word", client(fixture), out)
    return work


def train_and_eval(data_dir: Path, args, tag: str) -> dict:
    run = RunConfig(
        model=ModelConfig(conv_channels=tuple(
            int(c) for c in args.conv.split(","))),
        train=TrainConfig(batch_size=args.batch_size,
                          cycle_count=args.cycles, base_lr=args.lr,
                          gamma=args.gamma, seed=args.seed))
    out = args.work_dir / f"model_{tag}.echo"
    t0 = time.time()
    train_loop(run, data_dir, out)
    params, mcfg = load_model(out)
    preds = predict_directory(args.test_dir / "images", params, mcfg)
    gt = load_gt(args.test_dir / "gt.jsonl")
    words = sorted({inst["text"] for insts in gt.values() for inst in insts})
    rep = evaluate_e2e(preds, gt, EvalConfig(mode="point",
                                             lexicon_mode="full",
                                             lexicon=words, image_size=64))
    return {"tag": tag, "train_s": round(time.time() - t0, 1),
            "f_full": round(rep.fscore, 4)}


def main():
    args = parse_args()
    clean_dir = spoken_corpus(args.train_dir, args.work_dir / "clean",
                              MockSttClient)
    noisy_dir = spoken_corpus(
        args.train_dir, args.work_dir / "noisy",
        lambda fx: NoisySttClient(MockSttClient(fx), rate=args.rate,
                                  seed=args.noise_seed))
    clean = train_and_eval(clean_dir, args, "clean")
    print(json.dumps(clean), flush=True)
    noisy = train_and_eval(noisy_dir, args, "noisy")
    print(json.dumps(noisy), flush=True)
    print(json.dumps({
        "rate": args.rate,
        "degradation_points": round(100 * (clean["f_full"]
                                           - noisy["f_full"]), 2)}))


if __name__ == "__main__":
    main()
