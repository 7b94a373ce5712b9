"""Command-line pipeline driver.

Subcommands: discover, selftrain, eval, transfer-eval, sweep. Exit codes:
0 success, 1 internal error, 2 input/validation error. Every run directory
gets a config snapshot (config.json) and run metadata (run.json) so a run
can be replayed bit-exactly from its own artifacts.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, apply_overrides, load_config
from .discovery import (build_cluster_report, filter_uncertain,
                        synthesize_pseudo_masks, write_assignments)
from .errors import (ConfigError, EvaluationError, ManifestError,
                     MaskFormatError, TensorFormatError, UnsupsegError)
from .evaluate import (accumulate_overlaps, format_text_report, hungarian_match,
                       majority_vote, report, transfer_remap, write_report_json)
from .external import ExternalTrainerContract, run_external_trainer
from .graph import build_knn_affinity
from .kmeans import cluster_kmeans
from .manifest import DatasetManifest, load_manifest
from .maskio import read_mask, write_mask
from .proposals import build_proposals, write_crop_specs, write_skip_log
from .selftrain import self_train_round
from .spectral import spectral_embed
from .tensorio import read_feature_tensor

INPUT_ERRORS = (ConfigError, ManifestError, TensorFormatError, MaskFormatError,
                EvaluationError, FileNotFoundError)


def _write_run_metadata(out_dir: Path, command: str, cfg: RunConfig,
                        started: float, **extra) -> None:
    meta = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "wall_time_s": round(time.time() - started, 3),
        "config": cfg.to_dict(),
        **extra,
    }
    with open(out_dir / "run.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def _prepare_output(cfg: RunConfig, marker: str, force: bool) -> Path:
    out_dir = Path(cfg.output_dir)
    if (out_dir / marker).exists() and not force:
        raise ConfigError(
            f"{out_dir / marker} already exists; pass --force to overwrite")
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg.save(out_dir / "config.json")
    return out_dir


def _load_proposal_features(manifest: DatasetManifest, records):
    rows = []
    dim = None
    for rec in records:
        entry = manifest.by_id(rec.image_id)
        if entry.feature_path is None:
            raise ManifestError(f"{rec.image_id}: manifest entry has no feature_path")
        try:
            vec = read_feature_tensor(entry.feature_path)
        except (OSError, TensorFormatError) as exc:
            raise ManifestError(
                f"{rec.image_id}: cannot load feature file "
                f"{entry.feature_path} ({exc})") from exc
        if vec.ndim != 1:
            raise ManifestError(
                f"{rec.image_id}: proposal feature must be 1-D, got {vec.shape}")
        if dim is None:
            dim = vec.shape[0]
        elif vec.shape[0] != dim:
            raise ManifestError(
                f"{rec.image_id}: feature dim {vec.shape[0]} != {dim} seen earlier")
        rec.feature = vec
        rows.append(vec.astype(np.float64))
    return np.stack(rows)


def cmd_discover(cfg: RunConfig, force: bool = False,
                 proposals_only: bool = False) -> int:
    if cfg.train_manifest is None:
        raise ConfigError("discover needs train_manifest")
    started = time.time()
    out_dir = _prepare_output(cfg, "assignments.jsonl", force)
    manifest = load_manifest(cfg.train_manifest)

    records, skips = build_proposals(manifest, cfg.theta, cfg.min_area_fraction)
    write_skip_log(skips, out_dir / "skips.jsonl")
    write_crop_specs(records, out_dir / "crop_specs.json", cfg.crop_target)
    if not records:
        raise ManifestError("no usable proposals; see skips.jsonl")
    if proposals_only:
        _write_run_metadata(out_dir, "discover", cfg, started,
                            n_proposals=len(records), n_skips=len(skips),
                            proposals_only=True)
        print(f"wrote {len(records)} crop specs to {out_dir} (proposals only)")
        return 0

    features = _load_proposal_features(manifest, records)
    graph = build_knn_affinity(features, cfg.k_neighbors)
    embedding = spectral_embed(graph, min(cfg.spectral_components, len(records)))
    model = cluster_kmeans(embedding, min(cfg.n_clusters, len(records)),
                           n_init=cfg.n_init, seed=cfg.seed)
    kept = filter_uncertain(model, cfg.filter_fraction)

    write_assignments(out_dir / "assignments.jsonl", records, model, kept)
    ids = [r.image_id for r in records]
    with open(out_dir / "cluster_report.json", "w", encoding="utf-8") as fh:
        json.dump(build_cluster_report(model, kept, ids), fh, indent=2)

    masks = synthesize_pseudo_masks(records, model.assignments, kept)
    mask_dir = out_dir / "pseudomasks"
    mask_dir.mkdir(exist_ok=True)
    for image_id, mask in sorted(masks.items()):
        write_mask(mask, mask_dir / f"{image_id}.png")

    _write_run_metadata(out_dir, "discover", cfg, started,
                        n_proposals=len(records), n_skips=len(skips),
                        n_pseudo_masks=len(masks),
                        inertia=model.inertia)
    print(f"discovered {model.n_clusters} clusters over {len(records)} proposals; "
          f"{len(masks)} pseudo-masks in {mask_dir}")
    return 0


def _read_mask_dir(path: Path) -> dict[str, np.ndarray]:
    masks = {}
    for p in sorted(Path(path).glob("*.png")):
        masks[p.stem] = read_mask(p)
    if not masks:
        raise ManifestError(f"no .png masks found in {path}")
    return masks


def cmd_selftrain(cfg: RunConfig, pseudo_mask_dir, force: bool = False) -> int:
    if cfg.train_manifest is None:
        raise ConfigError("selftrain needs train_manifest")
    started = time.time()
    out_dir = _prepare_output(cfg, "iter_1", force)
    train_manifest = load_manifest(cfg.train_manifest)
    extend_manifest = (load_manifest(cfg.extend_manifest)
                       if cfg.extend_manifest else None)
    masks = _read_mask_dir(Path(pseudo_mask_dir))
    n_labels = cfg.n_clusters + 1

    contract = None
    if cfg.external_contract:
        contract = ExternalTrainerContract.load(cfg.external_contract)

    for iteration in range(1, cfg.iterations + 1):
        iter_dir = out_dir / f"iter_{iteration}"
        iter_dir.mkdir(parents=True, exist_ok=True)
        if contract is not None:
            merged = _merge_manifests(train_manifest, extend_manifest)
            preds_dir = run_external_trainer(
                contract, merged, masks, iter_dir / "trainer_ws", n_labels)
            masks = _read_mask_dir(preds_dir)
        else:
            masks, model, trace = self_train_round(
                train_manifest, masks, extend_manifest,
                cfg.train_config(iteration), n_labels)
            model.save(iter_dir / "head.npz")
            with open(iter_dir / "loss_trace.json", "w", encoding="utf-8") as fh:
                json.dump({"epoch_mean_loss": trace}, fh, indent=2)
        mask_dir = iter_dir / "pseudomasks"
        mask_dir.mkdir(exist_ok=True)
        for image_id, mask in sorted(masks.items()):
            write_mask(np.asarray(mask, dtype=np.uint8), mask_dir / f"{image_id}.png")
        print(f"iteration {iteration}: {len(masks)} masks -> {mask_dir}")

    _write_run_metadata(out_dir, "selftrain", cfg, started,
                        iterations=cfg.iterations, n_final_masks=len(masks))
    return 0


def _merge_manifests(a: DatasetManifest, b) -> DatasetManifest:
    if b is None:
        return a
    known = {e.image_id for e in a}
    merged = tuple(a.entries) + tuple(e for e in b if e.image_id not in known)
    return DatasetManifest(entries=merged, class_names=a.class_names)


def _load_class_map(path) -> tuple[dict[int, int], list[str] | None]:
    """Either a flat {src: dst} object or {"map": {...}, "target_classes": [...]}."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if "map" in raw:
        mapping = {int(k): int(v) for k, v in raw["map"].items()}
        return mapping, raw.get("target_classes")
    return {int(k): int(v) for k, v in raw.items()}, None


def cmd_eval(cfg: RunConfig, predictions_dir, class_map: dict | None = None,
             apply_map_to: str = "gt", force: bool = False,
             target_classes: list[str] | None = None) -> int:
    manifest_path = cfg.eval_manifest or cfg.train_manifest
    if manifest_path is None:
        raise ConfigError("eval needs eval_manifest (or train_manifest)")
    started = time.time()
    out_dir = _prepare_output(cfg, "report.json", force)
    manifest = load_manifest(manifest_path)

    gt_entries = [e for e in manifest if e.gt_mask_path is not None]
    if not gt_entries:
        raise ManifestError(f"{manifest_path}: no entries with gt_mask_path")
    pred_dir = Path(predictions_dir)
    pred_ids = {p.stem for p in pred_dir.glob("*.png")}
    gt_ids = {e.image_id for e in gt_entries}
    missing = sorted(gt_ids - pred_ids)
    extra = sorted(pred_ids - gt_ids)
    if missing or extra:
        raise EvaluationError(
            f"unmatched image ids; missing predictions: {missing[:10]}"
            f"{'...' if len(missing) > 10 else ''}, "
            f"predictions without ground truth: {extra[:10]}"
            f"{'...' if len(extra) > 10 else ''}")

    class_names = list(target_classes) if target_classes else list(manifest.class_names)
    n_classes = len(class_names)
    ids = [e.image_id for e in gt_entries]

    def preds():
        for e in gt_entries:
            yield read_mask(pred_dir / f"{e.image_id}.png")

    def gts():
        for e in gt_entries:
            yield read_mask(e.gt_mask_path)

    pred_stream, gt_stream = preds(), gts()
    if class_map is not None:
        if apply_map_to == "gt":
            gt_stream = transfer_remap(gt_stream, class_map)
        else:
            pred_stream = transfer_remap(pred_stream, class_map)

    # One cheap pre-pass to size the prediction-label axis.
    max_label = 0
    for e in gt_entries:
        m = read_mask(pred_dir / f"{e.image_id}.png")
        if class_map is not None and apply_map_to == "pred":
            m = next(iter(transfer_remap([m], class_map)))
        labs = m[m != 255]
        if labs.size:
            max_label = max(max_label, int(labs.max()))
    n_pred_labels = max(n_classes, max_label + 1)

    table = accumulate_overlaps(pred_stream, gt_stream, n_classes,
                                n_pred_labels, ids=ids)
    if cfg.eval_mode == "hungarian":
        matching = hungarian_match(table)
    else:
        matching = majority_vote(table)
    rep = report(table, matching, include_background=cfg.include_background)

    write_report_json(rep, out_dir / "report.json")
    text = format_text_report(rep, class_names)
    (out_dir / "report.txt").write_text(text + "\n", encoding="utf-8")
    _write_run_metadata(out_dir, "eval", cfg, started,
                        n_images=len(gt_entries), miou=rep.miou,
                        mode=cfg.eval_mode)
    print(text)
    return 0


def cmd_sweep(cfg: RunConfig, param: str, values: list, force: bool = False) -> int:
    sweepable = {"filter_fraction": float, "theta": float, "k_neighbors": int,
                 "n_clusters": int, "n_components": int, "n_init": int,
                 "seed": int}
    if param not in sweepable:
        raise ConfigError(f"cannot sweep {param!r}; choose from {sorted(sweepable)}")
    caster = sweepable[param]
    started = time.time()
    base_out = Path(cfg.output_dir)
    base_out.mkdir(parents=True, exist_ok=True)
    summary = []
    for raw_value in values:
        value = caster(raw_value)
        sub_cfg = apply_overrides(cfg, {
            param: value,
            "output_dir": str(base_out / f"{param}_{value}"),
        })
        cmd_discover(sub_cfg, force=force)
        entry = {"value": value}
        miou = _eval_pseudo_masks(sub_cfg)
        if miou is not None:
            entry.update(miou)
        summary.append(entry)
    with open(base_out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump({"param": param, "results": summary}, fh, indent=2)
    _write_run_metadata(base_out, "sweep", cfg, started, param=param,
                        n_values=len(values))
    print(json.dumps({"param": param, "results": summary}, indent=2))
    return 0


def _eval_pseudo_masks(cfg: RunConfig):
    """Score a discover run's pseudo-masks against gt, over covered images only."""
    manifest = load_manifest(cfg.eval_manifest or cfg.train_manifest)
    mask_dir = Path(cfg.output_dir) / "pseudomasks"
    pairs = [(e.image_id, mask_dir / f"{e.image_id}.png", e.gt_mask_path)
             for e in manifest
             if e.gt_mask_path is not None and (mask_dir / f"{e.image_id}.png").exists()]
    if not pairs:
        return None
    n_classes = len(manifest.class_names)
    n_pred = max(n_classes, cfg.n_clusters + 1)
    table = accumulate_overlaps(
        (read_mask(p) for _, p, _ in pairs),
        (read_mask(g) for _, _, g in pairs),
        n_classes, n_pred, ids=[i for i, _, _ in pairs])
    matching = (hungarian_match(table) if cfg.eval_mode == "hungarian"
                and n_pred == n_classes else majority_vote(table))
    rep = report(table, matching, include_background=cfg.include_background)
    return {"miou": rep.miou, "discovered_count": rep.discovered_count,
            "n_images": len(pairs)}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unsupseg",
        description="Unsupervised object-category discovery, pseudo-mask "
                    "self-training, and matched-IoU evaluation.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--output", dest="output_dir", help="run directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--force", action="store_true",
                       help="overwrite an existing run directory")

    p = sub.add_parser("discover", help="proposals -> clustering -> pseudo-masks")
    add_common(p)
    p.add_argument("--manifest", dest="train_manifest")
    p.add_argument("--theta", type=float)
    p.add_argument("--min-area-fraction", dest="min_area_fraction", type=float)
    p.add_argument("--k-neighbors", dest="k_neighbors", type=int)
    p.add_argument("--n-clusters", dest="n_clusters", type=int)
    p.add_argument("--n-components", dest="n_components", type=int)
    p.add_argument("--n-init", dest="n_init", type=int)
    p.add_argument("--filter-fraction", dest="filter_fraction", type=float)
    p.add_argument("--proposals-only", action="store_true",
                   help="stop after writing crop specs (extractor handshake)")

    p = sub.add_parser("selftrain", help="teacher/student rounds on pseudo-masks")
    add_common(p)
    p.add_argument("--manifest", dest="train_manifest")
    p.add_argument("--extend-manifest", dest="extend_manifest")
    p.add_argument("--pseudo-masks", required=True, dest="pseudo_masks")
    p.add_argument("--n-clusters", dest="n_clusters", type=int,
                   help="foreground label count of the pseudo-masks")
    p.add_argument("--iterations", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--batch-pixels", dest="batch_pixels", type=int)
    p.add_argument("--external-contract", dest="external_contract")

    for name in ("eval", "transfer-eval"):
        p = sub.add_parser(name, help="matched-IoU evaluation of prediction masks")
        add_common(p)
        p.add_argument("--manifest", dest="eval_manifest")
        p.add_argument("--predictions", required=True)
        p.add_argument("--mode", dest="eval_mode", choices=["hungarian", "majority"])
        p.add_argument("--foreground-only", action="store_true",
                       help="exclude background from the headline mIoU")
        if name == "transfer-eval":
            p.add_argument("--class-map", required=True, dest="class_map")
            p.add_argument("--apply-to", choices=["gt", "pred"], default="gt")

    p = sub.add_parser("sweep", help="re-run discover over a parameter range")
    add_common(p)
    p.add_argument("--manifest", dest="train_manifest")
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True,
                   help="comma-separated values, e.g. 0.2,0.3,0.4")
    return parser


_OVERRIDE_KEYS = ("train_manifest", "extend_manifest", "eval_manifest",
                  "output_dir", "seed", "theta", "min_area_fraction",
                  "k_neighbors", "n_clusters", "n_components", "n_init",
                  "filter_fraction", "iterations", "learning_rate",
                  "batch_pixels", "external_contract", "eval_mode",
                  "class_map")


def _config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {k: getattr(args, k) for k in _OVERRIDE_KEYS if hasattr(args, k)}
    if getattr(args, "foreground_only", False):
        overrides["include_background"] = False
    cfg = apply_overrides(cfg, overrides)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        if args.command == "discover":
            return cmd_discover(cfg, force=args.force,
                                proposals_only=args.proposals_only)
        if args.command == "selftrain":
            return cmd_selftrain(cfg, args.pseudo_masks, force=args.force)
        if args.command in ("eval", "transfer-eval"):
            class_map = None
            target_classes = None
            apply_to = "gt"
            if args.command == "transfer-eval":
                class_map, target_classes = _load_class_map(
                    cfg.class_map or args.class_map)
                apply_to = args.apply_to
            return cmd_eval(cfg, args.predictions, class_map=class_map,
                            apply_map_to=apply_to, force=args.force,
                            target_classes=target_classes)
        if args.command == "sweep":
            values = [v for v in args.values.split(",") if v]
            return cmd_sweep(cfg, args.param, values, force=args.force)
        raise ConfigError(f"unknown command {args.command!r}")
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except UnsupsegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
