"""segextract: saliency / features / dense subcommands over a manifest."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .backbones import BackboneError, load_backbone
from .extract import (extract_dense_features, extract_proposal_features,
                      extract_saliency, read_engine_manifest)
from .saliency import SaliencyError, load_saliency_model


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segextract",
        description="Produce saliency maps and FTN1 feature files from "
                    "pretrained (or toy) vision models.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--manifest", required=True,
                       help="engine JSON-lines manifest")
        p.add_argument("--out-dir", required=True)
        p.add_argument("--report", help="extractor manifest JSON path")
        p.add_argument("--checkpoint", help="TorchScript checkpoint when needed")

    p = sub.add_parser("saliency", help="8-bit grayscale saliency PNGs")
    add_common(p)
    p.add_argument("--model", default="contrast",
                   choices=["contrast", "torchscript"])

    p = sub.add_parser("features", help="per-proposal CLS features (FTN1 [D])")
    add_common(p)
    p.add_argument("--crop-specs", required=True,
                   help="CropSpec JSON from the engine's discover step")
    p.add_argument("--backbone", default="toy", choices=["toy", "torchscript"])
    p.add_argument("--patch-size", type=int, default=8)
    p.add_argument("--combined", help="also write one [n, D] tensor here")

    p = sub.add_parser("dense", help="dense per-pixel features (FTN1 [H', W', D])")
    add_common(p)
    p.add_argument("--backbone", default="toy", choices=["toy", "torchscript"])
    p.add_argument("--patch-size", type=int, default=8)
    p.add_argument("--input-size", type=int, default=256)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        entries = read_engine_manifest(args.manifest)
        if args.command == "saliency":
            model = load_saliency_model(args.model, args.checkpoint)
            report = extract_saliency(entries, model, args.out_dir)
        elif args.command == "features":
            backbone = load_backbone(args.backbone, args.checkpoint,
                                     patch_size=args.patch_size)
            with open(args.crop_specs, "r", encoding="utf-8") as fh:
                crop_specs = json.load(fh)
            report = extract_proposal_features(entries, crop_specs, backbone,
                                               args.out_dir,
                                               combined_path=args.combined)
        else:
            backbone = load_backbone(args.backbone, args.checkpoint,
                                     patch_size=args.patch_size)
            report = extract_dense_features(entries, backbone, args.out_dir,
                                            input_size=args.input_size)
    except (BackboneError, SaliencyError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    report_path = args.report or Path(args.out_dir) / "extractor_manifest.json"
    report.save(report_path)
    print(f"{len(report.outputs)} outputs, {len(report.failures)} failures "
          f"-> {report_path}")
    if report.failures:
        for image_id, reason in sorted(report.failures.items()):
            print(f"  failed {image_id}: {reason}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
