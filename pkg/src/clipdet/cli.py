"""Command-line entry point: dataset generation, training, evaluation,
ablation grids, prediction export, and overlay rendering."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, load_run_config, run_config_from_dict
from .dataset import load_dataset, load_manifest, save_dataset
from .evaluation import classification_accuracy, evaluate, format_report_table
from .inference import ground_truth_from_samples, predict_dataset
from .render import render_predictions
from .synth import VideoConfig, generate_dataset, split_samples
from .training import ablate, format_ablation_table, load_model, train


def _cmd_gen_data(args) -> int:
    h, w = (int(v) for v in args.res.split(","))
    cfg = VideoConfig(height=h, width=w, frame_count=args.frames)
    samples = generate_dataset(args.seed, args.videos, cfg,
                               malignant_fraction=args.malignant_fraction)
    split_samples(samples, args.test_fraction, seed=args.seed)
    save_dataset(samples, args.out)
    n_test = sum(1 for s in samples if s.split == "test")
    print(f"wrote {len(samples)} videos ({len(samples) - n_test} train / {n_test} test) to {args.out}")
    return 0


def _cmd_train(args) -> int:
    config = load_run_config(args.config)
    record, _ = train(config, out_dir=args.out)
    print(f"trained {config.variant} for {len(record.epoch_losses)} epochs "
          f"in {record.wall_clock_sec:.1f}s")
    if record.eval_report:
        print(f"test AP {record.eval_report['AP'] * 100:.1f} "
              f"AP50 {record.eval_report['AP50'] * 100:.1f} "
              f"AP75 {record.eval_report['AP75'] * 100:.1f}")
    return 0


def _load_for_inference(args):
    samples = load_dataset(args.data)
    test = [s for s in samples if s.split == "test"] or samples
    config = load_run_config(args.config) if args.config else None
    model, config = load_model(args.checkpoint, config, test[0].resolution)
    return model, config, test


def _cmd_predict(args) -> int:
    model, config, test = _load_for_inference(args)
    use_inter, use_intra = config.fusion_switches
    records, _ = predict_dataset(model, test, use_inter, use_intra)
    with open(args.out, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    print(f"wrote {len(records)} frame records to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    model, config, test = _load_for_inference(args)
    use_inter, use_intra = config.fusion_switches
    records, video_labels = predict_dataset(model, test, use_inter, use_intra)
    report = evaluate(records, ground_truth_from_samples(test), mode=args.mode)
    report.classification_accuracy = classification_accuracy(
        video_labels, {v.id: v.video_label for v in test}
    )
    print(format_report_table(report))
    print(f"video classification accuracy: {report.classification_accuracy:.3f}")
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_dict(), indent=1), encoding="utf-8")
        print(f"report written to {args.report}")
    return 0


def _cmd_ablate(args) -> int:
    raw = json.loads(Path(args.grid).read_text(encoding="utf-8"))
    if not isinstance(raw, dict) or not raw:
        raise ConfigError("grid file must be a JSON object mapping names to run configs")
    grid = {name: run_config_from_dict(cfg) for name, cfg in raw.items()}
    seeds = [int(s) for s in args.seeds.split(",")]
    result = ablate(grid, seeds, out_dir=args.out)
    print(format_ablation_table(result))
    return 0


def _cmd_render(args) -> int:
    records = []
    with open(args.preds, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    count = render_predictions(args.data, records, args.out, score_threshold=args.score_threshold)
    print(f"rendered {count} frames to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clipdet")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic lesion video dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--videos", type=int, default=50)
    p.add_argument("--frames", type=int, default=24)
    p.add_argument("--res", default="96,96", help="H,W")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--malignant-fraction", type=float, default=0.5)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train one run config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset's test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=("class-agnostic", "class-aware"), default="class-agnostic")
    p.add_argument("--report", default=None)
    p.add_argument("--config", default=None, help="run config (defaults to config.json next to the checkpoint)")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", help="run a grid of configs over seeds")
    p.add_argument("--grid", required=True, help="JSON object: name -> run config")
    p.add_argument("--seeds", required=True, help="comma-separated seeds")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("predict", help="export detections as JSON lines")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("render", help="write frames with box overlays")
    p.add_argument("--preds", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--score-threshold", type=float, default=0.3)
    p.set_defaults(func=_cmd_render)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
