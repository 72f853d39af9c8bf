"""Command-line front door for training and inference.

Subcommands: train (fit on a manifest's train split, write a checkpoint
and loss curve) and predict (load a checkpoint, emit AGBD maps and a
predictions CSV for a split).

Exit codes: 0 = success, 1 = usage error, 2 = data error.
"""

import argparse
import csv
import logging
import sys
from pathlib import Path

import torch

from .losses import LossConfig
from .models import BACKBONE_SCALES, ModelConfig, build_model
from .predict import predict_manifest
from .train import TrainConfig, load_checkpoint, train

__all__ = ["main"]

log = logging.getLogger("agbtrainer")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that exits with status 1 on usage errors (not 2)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1; got {value}")
    return value


def _positive_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0; got {value}")
    return value


def _non_negative_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0; got {value}")
    return value


def cmd_train(args):
    try:
        model_cfg = ModelConfig(
            input_size=args.input_size,
            backbone_scale=args.backbone,
            depth_head=args.depth_head,
        )
        train_cfg = TrainConfig(
            epochs=args.epochs,
            batch_size=args.batch_size,
            learning_rate=args.lr,
            loss=LossConfig(alpha1=args.alpha1, alpha2=args.alpha2),
            augment_flip=not args.no_flip,
            seed=args.seed,
            num_workers=args.workers,
            max_steps=args.max_steps,
        )
    except ValueError as err:
        raise SystemExit(f"agbtrainer train: error: {err}") from err

    torch.manual_seed(train_cfg.seed)
    model = build_model(model_cfg)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    curve = train(model, args.manifest, train_cfg, checkpoint_path=out_dir / "checkpoint.pt")
    with (out_dir / "loss_curve.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("step", "loss"))
        for step, value in enumerate(curve, start=1):
            writer.writerow((step, repr(value)))
    log.info(
        "trained %d step(s): loss %.6f -> %.6f; checkpoint at %s",
        len(curve),
        curve[0],
        curve[-1],
        out_dir / "checkpoint.pt",
    )
    return EXIT_OK


def cmd_predict(args):
    model, _ = load_checkpoint(args.checkpoint)
    split = None if args.split == "all" else args.split
    paths, csv_path = predict_manifest(model, args.manifest, args.out_dir, split=split)
    log.info("wrote %d density map(s) and %s", len(paths), csv_path)
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="agbtrainer", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    commands = parser.add_subparsers(dest="command", required=True)

    p_train = commands.add_parser("train", help="fit a model on a manifest's train split")
    p_train.add_argument("manifest", help="manifest CSV with ground-truth density maps")
    p_train.add_argument("out_dir", help="directory for checkpoint.pt and loss_curve.csv")
    p_train.add_argument("--backbone", choices=BACKBONE_SCALES, default="tiny")
    p_train.add_argument("--input-size", type=_positive_int, default=224)
    p_train.add_argument("--depth-head", action="store_true")
    p_train.add_argument("--epochs", type=_positive_int, default=40)
    p_train.add_argument("--batch-size", type=_positive_int, default=2)
    p_train.add_argument("--lr", type=_positive_float, default=1e-3)
    p_train.add_argument("--alpha1", type=_non_negative_float, default=1e-5)
    p_train.add_argument("--alpha2", type=_non_negative_float, default=1.0)
    p_train.add_argument("--max-steps", type=_positive_int, default=None)
    p_train.add_argument("--no-flip", action="store_true", help="disable flip augmentation")
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--workers", type=int, default=0, help="data-loader workers")
    p_train.set_defaults(func=cmd_train)

    p_predict = commands.add_parser("predict", help="emit AGBD maps and a predictions CSV")
    p_predict.add_argument("checkpoint", help="checkpoint written by train")
    p_predict.add_argument("manifest", help="manifest CSV with RGB paths and true totals")
    p_predict.add_argument("out_dir")
    p_predict.add_argument(
        "--split", default="test", help='manifest split to predict ("all" for every row)'
    )
    p_predict.set_defaults(func=cmd_predict)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    log.propagate = False

    try:
        return args.func(args)
    except (RuntimeError, ValueError, OSError) as err:
        log.error("%s", err)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
