"""Command line entry point: `okp-export`."""

from __future__ import annotations

import argparse
import sys

from .export import MODEL_TABLE, ExportConfig, export_features


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="okp-export",
        description="Export dense ViT patch-token features to an OKPF file.",
    )
    parser.add_argument("--image", required=True, help="input image path")
    parser.add_argument(
        "--model", default="dino-vitb8", choices=sorted(MODEL_TABLE),
    )
    parser.add_argument(
        "--input-size", type=int, default=None,
        help="model input side in pixels (default: 260 for patch-8 models, "
        "520 for patch-16)",
    )
    parser.add_argument(
        "--stride", type=int, default=None,
        help="token stride in pixels (default: half the patch size)",
    )
    parser.add_argument("--out", required=True, help="output .okpf path")
    parser.add_argument("--device", default="cpu")
    parser.add_argument(
        "--random-weights", action="store_true",
        help="seeded random weights instead of a pretrained download "
        "(geometry/determinism testing without network access)",
    )
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--layers", type=int, default=None,
        help="truncate the encoder to this many layers",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExportConfig(
            model=args.model, input_size=args.input_size, stride=args.stride,
            device=args.device, random_weights=args.random_weights,
            seed=args.seed, layers=args.layers,
        )
        geom = export_features(args.image, cfg, args.out)
    except OSError as exc:
        print(f"okp-export: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError) as exc:
        print(f"okp-export: {exc}", file=sys.stderr)
        return 2
    h, w = geom.grid_shape()
    print(f"wrote {args.out}: grid={h}x{w} model={cfg.model} stride={cfg.stride}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
