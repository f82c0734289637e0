"""Command-line entry point: convert a checkpoint and optionally verify it.

Prints the export manifest as JSON. Exit statuses: 0 success, 1 export
failure or bad usage, 2 verification failure.
"""

import argparse
import json
import sys

from .export import ExportError, export_checkpoint


def _size(text: str):
    try:
        h, w = text.lower().split("x")
        return (int(h), int(w))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from exc


def build_parser():
    parser = argparse.ArgumentParser(prog="exitstream-export", description=__doc__)
    parser.add_argument("--src", required=True, help="checkpoint path (torch state dict)")
    parser.add_argument("--arch", required=True, help="reference architecture identifier")
    parser.add_argument("--spec-out", required=True)
    parser.add_argument("--weights-out", required=True)
    parser.add_argument("--classes", type=int, default=4)
    parser.add_argument("--input-size", type=_size, default=(32, 32), help="HxW, default 32x32")
    parser.add_argument("--verify", action="store_true",
                        help="cross-check the engine against the adapted source forward")
    parser.add_argument("--verify-clips", type=int, default=10)
    parser.add_argument("--allow-partial", action="store_true",
                        help="skip unsupported layers instead of failing")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--tolerance", type=float, default=1e-4)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        manifest = export_checkpoint(
            args.src,
            args.arch,
            args.spec_out,
            args.weights_out,
            classes=args.classes,
            input_size=args.input_size,
            allow_partial=args.allow_partial,
            verify_clips=args.verify_clips if args.verify else 0,
            seed=args.seed,
            tolerance=args.tolerance,
        )
    except (ExportError, OSError) as exc:
        print(f"export failed: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(manifest.to_dict(), indent=2))
    if manifest.verification is not None and not manifest.verification["passed"]:
        print("verification failed", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
