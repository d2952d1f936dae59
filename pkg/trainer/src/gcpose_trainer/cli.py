"""Command line for training a pose regressor and exporting its weights."""

from __future__ import annotations

import argparse
import sys

from .train import TrainConfig, train_and_export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gcpose-train", description=__doc__)
    parser.add_argument("--dataset", required=True, help="scene dataset (jsonl)")
    parser.add_argument("--out", required=True, help="weight file to write")
    parser.add_argument("--kind", choices=["upnp", "grps"], default=None)
    parser.add_argument("--conv-widths", default=None,
                        help="comma-separated conv channel widths")
    parser.add_argument("--fc-widths", default=None,
                        help="comma-separated hidden fully-connected widths")
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument("--batch-size", type=int, default=64)
    parser.add_argument("--lr", type=float, default=1e-3)
    parser.add_argument("--holdout", type=float, default=0.1)
    parser.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    def widths(text):
        return tuple(int(w) for w in text.split(",")) if text else ()

    config = TrainConfig(
        dataset=args.dataset,
        out_path=args.out,
        kind=args.kind,
        conv_widths=widths(args.conv_widths),
        fc_widths=widths(args.fc_widths),
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        holdout_fraction=args.holdout,
        seed=args.seed,
    )
    try:
        report = train_and_export(config)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(
        f"trained {report.kind} regressor: {report.train_size} scenes, "
        f"{report.epochs} epochs, final loss {report.final_loss:.4f}"
    )
    print(f"held-out median rotation error: {report.holdout_median_rotation_deg:.3f} deg")
    if report.kind == "grps":
        print(f"held-out median translation error: {report.holdout_median_translation:.4f}")
        print(f"held-out median scale error: {report.holdout_median_scale_pct:.2f}%")
    print(f"wrote weights -> {config.out_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
