"""Command-line wrapper: render figures and summaries from a run manifest."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import SchemaError, X_AXES, render_comparison


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dasa-figures", description=__doc__)
    parser.add_argument("--manifest", required=True, help="manifest.json from a simulator run")
    parser.add_argument("--out", required=True, help="output directory for images and summary")
    parser.add_argument("--x-axis", choices=X_AXES, default="updates")
    parser.add_argument(
        "--format",
        nargs="+",
        default=["png"],
        choices=("png", "svg", "pdf"),
        help="image formats to emit",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    manifest = Path(args.manifest)
    if not manifest.exists():
        print(f"manifest not found: {manifest}", file=sys.stderr)
        return 2
    try:
        result = render_comparison(
            manifest, args.out, x_axis=args.x_axis, formats=tuple(args.format)
        )
    except (SchemaError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in result.image_paths:
        print(f"wrote {path}")
    print(f"wrote {result.summary_path}")
    sys.stdout.write(result.summary_text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
