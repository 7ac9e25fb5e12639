"""Command-line entry points.

Subcommands: ``synth`` (generate a synthetic dataset), ``train`` (one
training run), ``compare`` (full-image vs masked arms), ``score``
(metrics over an external prediction file), ``plot`` (report CSV to SVG).

Exit codes: 0 on success; 2 for any handled failure, reported to stderr
as a single machine-parsable ``ErrorClass: message`` line.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .errors import VitrayError
from .metrics import evaluate, read_score_file
from .plot import render_report_svg
from .train import (
    REPORT_COLUMNS,
    build_train_config,
    parse_report_csv,
    read_config_file,
    run_compare,
    run_training,
)


def _print_report_row(report) -> None:
    print(report.csv_row(), flush=True)


def cmd_synth(args) -> int:
    from .data import generate_synthetic

    out = Path(args.out)
    for split, per_class in (("train", args.train_per_class), ("test", args.test_per_class)):
        if per_class < 1:
            continue
        manifest = generate_synthetic(args.classes, per_class, args.size, args.seed,
                                      out_dir=out, split=split, fmt=args.format)
        print(f"{split}: {len(manifest)} images -> {out / (split + '.csv')}")
    return 0


def _config_from_args(args) -> dict:
    values = read_config_file(args.config)
    if args.seed is not None:
        values["seed"] = args.seed
    if args.mode is not None:
        values["pipeline_mode"] = args.mode
    if args.out is not None:
        values["out_dir"] = args.out
    if args.epochs is not None:
        values["epochs"] = args.epochs
    return values


def cmd_train(args) -> int:
    values = _config_from_args(args)
    cfg = build_train_config(values, base_dir=Path(args.config).parent)
    print(",".join(REPORT_COLUMNS))
    _, ckpt = run_training(cfg, resume_from=args.resume, on_epoch=_print_report_row)
    print(f"report: {Path(cfg.out_dir) / 'report.csv'}")
    print(f"checkpoint: {ckpt}")
    return 0


def cmd_compare(args) -> int:
    args.mode = None
    values = _config_from_args(args)
    values["pipeline_mode"] = "full"
    cfg_full = build_train_config(values, base_dir=Path(args.config).parent)
    cfg_masked = dataclasses.replace(cfg_full, pipeline_mode="masked")
    run_compare(cfg_full, cfg_masked)
    out = Path(cfg_full.out_dir)
    print((out / "compare_delta.csv").read_text(), end="")
    print(f"comparison: {out / 'compare.csv'}")
    return 0


def cmd_score(args) -> int:
    predictions = read_score_file(args.predictions)
    report = evaluate(predictions.scores, predictions.labels)
    lines = ["metric,value"] + [f"{name},{value:.6f}" for name, value in report.items()]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return 0


def cmd_plot(args) -> int:
    reports = parse_report_csv(args.report)
    out = Path(args.out) if args.out else Path(args.report).with_suffix(".svg")
    render_report_svg(reports, out, title=Path(args.report).stem)
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vitray",
                                     description="Vision Transformer training and evaluation engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset with lung masks")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--train-per-class", type=int, default=20)
    p.add_argument("--test-per-class", type=int, default=5)
    p.add_argument("--size", type=int, default=32, help="image side in pixels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("png", "pgm"), default="png")
    p.set_defaults(func=cmd_synth)

    for name, helptext in (("train", "run one training configuration"),
                           ("compare", "train full-image and masked arms side by side")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="key = value config file")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="override output directory")
        p.add_argument("--epochs", type=int, default=None, help="override epoch count")
        if name == "train":
            p.add_argument("--mode", choices=("full", "masked"), default=None,
                           help="override pipeline mode")
            p.add_argument("--resume", default=None, help="checkpoint to resume from")
            p.set_defaults(func=cmd_train)
        else:
            p.set_defaults(func=cmd_compare)

    p = sub.add_parser("score", help="evaluate an external label,score_0,... prediction file")
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", default=None, help="write the metric report CSV here")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("plot", help="render a report CSV as an SVG figure")
    p.add_argument("--report", required=True)
    p.add_argument("--out", default=None, help="output SVG path (default: alongside the report)")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (VitrayError, OSError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
