"""Command-line surface: train, validate, export-pretrained."""
from __future__ import annotations

import argparse
import json
import sys

from .bundle import validate_bundle
from .pretrained import export_pretrained
from .train import train_toy_classifier


def cmd_train(args: argparse.Namespace) -> int:
    try:
        bundle = train_toy_classifier(
            dataset=args.dataset,
            seed=args.seed,
            out_dir=args.out,
            epochs=args.epochs,
        )
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(json.dumps({"bundle": str(bundle.root), **bundle.metadata}, sort_keys=True))
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    report = validate_bundle(args.bundle)
    print(json.dumps(report, sort_keys=True))
    return 0 if report["ok"] else 1


def cmd_export_pretrained(args: argparse.Namespace) -> int:
    try:
        bundle = export_pretrained(args.name, args.out)
    except (ValueError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(json.dumps({"bundle": str(bundle.root)}, sort_keys=True))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="model-prep", description="Fixture classifier training and export."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the toy classifier and export a bundle")
    p.add_argument("--dataset", default="digits")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="bundle output directory")
    p.add_argument("--epochs", type=int, default=1)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("validate", help="cross-check a bundle against its probe set")
    p.add_argument("--bundle", required=True)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("export-pretrained", help="export a standard classifier")
    p.add_argument("--name", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_export_pretrained)

    args = parser.parse_args(argv)
    return args.fn(args)


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
