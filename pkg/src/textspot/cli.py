"""Command-line entry point: synth, train, eval, infer, annotate.

Exit codes: 0 success, 2 usage error (synopsis on stderr), 1 runtime
error (message on stderr).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .annotate import MockSttClient, RemoteSttClient, annotate_audio
from .config import RunConfig, load_run_config
from .inference import predict_directory, predict_file
from .metrics import EvalConfig, evaluate_e2e, load_gt, load_lexicon
from .model import load_model
from .server import serve_annotation_api
from .synth import SynthConfig, generate_dataset, load_png
from .train import train_loop


class UsageError(Exception):
    """Semantic usage error discovered after argparse (exit code 2)."""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="textspot",
        description="Desk-scale transcription-supervised text spotting.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--count", type=int, required=True, help="sample count")
    p.add_argument("--seed", type=int, required=True, help="master seed")
    p.add_argument("--size", type=int, choices=(64, 128), default=64)
    p.add_argument("--min-instances", type=int, default=1)
    p.add_argument("--max-instances", type=int, default=1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--data", help="dataset directory (or paths.data in config)")
    p.add_argument("--config", required=True, help="run-config JSON file")
    p.add_argument("--out", help="model output path (or paths.model in config)")
    p.add_argument("--dump-schedule", help="also write the schedule JSONL here")
    p.add_argument("--loss-csv", help="loss log path (default: <out>.loss.csv)")
    p.add_argument("--uniform", action="store_true",
                   help="uniform-shuffle baseline instead of the curriculum")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on a dataset")
    p.add_argument("--data", required=True, help="dataset directory with gt.jsonl")
    p.add_argument("--model", required=True, help="saved model file")
    p.add_argument("--metric", choices=("point", "polygon"), default="point")
    p.add_argument("--lexicon", choices=("none", "full"), default="none")
    p.add_argument("--lexicon-file",
                   help="word list for --lexicon full (default: all GT words)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="run a model on one image")
    p.add_argument("--image", required=True, help="input PNG")
    p.add_argument("--model", required=True, help="saved model file")
    p.add_argument("--out", required=True, help="predictions JSONL path")
    p.add_argument("--overlay", help="optional overlay PNG path")
    p.add_argument("--min-confidence", type=float, default=0.0,
                   help="drop predictions below this confidence")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("annotate", help="annotation tooling")
    asub = p.add_subparsers(dest="annotate_command", required=True)

    ps = asub.add_parser("serve", help="run the annotation HTTP service")
    ps.add_argument("--images", required=True, help="image directory")
    ps.add_argument("--out", required=True, help="annotation JSONL path")
    ps.add_argument("--port", type=int, required=True)
    ps.set_defaults(func=cmd_annotate_serve)

    pa = asub.add_parser("audio", help="transcribe audio files to annotations")
    pa.add_argument("--audio", required=True, help="audio directory")
    pa.add_argument("--mode", choices=("word", "char"), required=True)
    pa.add_argument("--stt", choices=("mock", "http"), required=True)
    pa.add_argument("--fixtures", help="fixture JSONL for --stt mock")
    pa.add_argument("--endpoint", help="endpoint URL for --stt http")
    pa.add_argument("--out", required=True, help="annotation JSONL path")
    pa.set_defaults(func=cmd_annotate_audio)
    return parser


def cmd_synth(args) -> int:
    cfg = SynthConfig(count=args.count, size=args.size,
                      min_instances=args.min_instances,
                      max_instances=args.max_instances)
    out = generate_dataset(cfg, seed=args.seed, out_dir=args.out)
    print(f"wrote {args.count} samples to {out}")
    return 0


def cmd_train(args) -> int:
    run_cfg = load_run_config(args.config)
    data = args.data or run_cfg.paths.data
    out = args.out or run_cfg.paths.model
    if not data:
        raise UsageError("train needs --data or paths.data in the config")
    if not out:
        raise UsageError("train needs --out or paths.model in the config")
    loss_csv = args.loss_csv or run_cfg.paths.loss_csv
    schedule_out = args.dump_schedule or run_cfg.paths.schedule
    path = train_loop(run_cfg, data, out, loss_csv=loss_csv,
                      schedule_out=schedule_out, uniform=args.uniform)
    print(f"model written to {path}")
    return 0


def cmd_eval(args) -> int:
    if args.lexicon_file and args.lexicon != "full":
        raise UsageError("--lexicon-file requires --lexicon full")
    params, model_cfg = load_model(args.model)
    data = Path(args.data)
    gt = load_gt(data / "gt.jsonl")

    lexicon = None
    if args.lexicon == "full":
        if args.lexicon_file:
            lexicon = load_lexicon(args.lexicon_file)
        else:
            lexicon = sorted({inst["text"] for insts in gt.values()
                              for inst in insts})
    pngs = sorted((data / "images").glob("*.png"))
    if not pngs:
        raise UsageError(f"no images under {data / 'images'}")
    image_size = load_png(pngs[0]).shape[0]
    eval_cfg = EvalConfig(mode=args.metric, lexicon_mode=args.lexicon,
                          lexicon=lexicon, image_size=image_size)

    preds = predict_directory(data / "images", params, model_cfg)
    report = evaluate_e2e(preds, gt, eval_cfg)
    print(json.dumps({"precision": report.precision, "recall": report.recall,
                      "fscore": report.fscore}))
    return 0


def cmd_infer(args) -> int:
    n = predict_file(args.image, args.model, args.out,
                     overlay_path=args.overlay,
                     min_confidence=args.min_confidence)
    print(f"wrote {n} predictions to {args.out}")
    return 0


def cmd_annotate_serve(args) -> int:
    try:
        serve_annotation_api(args.images, args.out, args.port)
    except KeyboardInterrupt:
        pass
    return 0


def cmd_annotate_audio(args) -> int:
    if args.stt == "mock":
        if not args.fixtures:
            raise UsageError("--stt mock requires --fixtures")
        client = MockSttClient(args.fixtures)
    else:
        if not args.endpoint:
            raise UsageError("--stt http requires --endpoint")
        client = RemoteSttClient(args.endpoint)
    n = annotate_audio(args.audio, args.mode, client, args.out)
    print(f"wrote {n} annotation records to {args.out}")
    return 0


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    try:
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        print(parser.format_usage(), end="", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s %(name)s %(message)s")
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
