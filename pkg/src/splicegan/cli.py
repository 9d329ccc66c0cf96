"""Command-line entry point: ``splicegan {synth,train,infer,eval,plot}``.

Exit codes: 0 success, 2 configuration or I/O error, 3 numeric failure,
4 missing input artifact.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__
from .checkpoint import Checkpoint
from .core import ImageRGB, SizeClass, SoftMask
from .errors import ConfigError, MissingArtifact, SpliceGanError
from .evaluation import (
    Prediction,
    evaluate_predictions,
    predict_split,
    read_curve_csv,
    thin,
    write_report,
)
from .forge import (
    DatasetManifest,
    build_splits,
    default_workers,
    load_bases,
    make_bases,
    make_sprites,
    bases_needed,
    synthesize_corpus,
)
from .inference import classify, detection_score, estimate_masks, localize
from .losses import LossConfig
from .plotting import plot_curves
from .training import VALIDATION_METRICS, TrainConfig, train

log = logging.getLogger("splicegan")

SEED_ENV = "SPLICEGAN_SEED"
DEFAULT_SPRITES = 16


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise MissingArtifact(f"config file not found: {p}")
    try:
        return json.loads(p.read_text())
    except ValueError as exc:
        raise ConfigError(f"config {p} is not valid JSON: {exc}") from exc


def _seed(flag: int | None, config: dict) -> int:
    if flag is not None:
        return flag
    if "seed" in config:
        return int(config["seed"])
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from None
    return 0


def _outdir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    return out


# ------------------------------------------------------------------ synth


def cmd_synth(args) -> int:
    config = _load_config(args.config)
    section = {**config.get("synth", {})}
    seed = _seed(args.seed, config)
    scale = args.scale if args.scale is not None else float(section.get("scale", 1.0))
    n_sprites = int(section.get("sprites", DEFAULT_SPRITES))
    out = _outdir(args.out)

    if args.bases:
        bases = load_bases(args.bases)
    else:
        bases = make_bases(bases_needed(scale), seed)
    sprites = make_sprites(n_sprites, seed)
    manifest = synthesize_corpus(bases, sprites, seed, out, scale=scale, workers=args.workers)
    manifest = build_splits(manifest, seed)
    manifest.save(out / "manifest.json")

    counts = manifest.counts
    print(f"small {counts['small']} / medium {counts['medium']} / large {counts['large']} / pristine {counts['pristine']}"
          f" (total {len(manifest.pairs)})")
    for split, tally in manifest.split_counts().items():
        print(f"  {split}: " + ", ".join(f"{k} {v}" for k, v in sorted(tally.items())))
    return 0


# ------------------------------------------------------------------ train


def _train_config(args, config: dict) -> TrainConfig:
    section = dict(config.get("train", {}))
    loss = dict(section.pop("loss", {}))
    if args.loss is not None:
        loss["recon_mode"] = args.loss
    if args.lam is not None:
        loss["lam"] = args.lam
    overrides = {
        "epochs": args.epochs,
        "lr": args.lr,
        "batch_size": args.batch_size,
        "checkpoint_every": args.checkpoint_every,
        "preset": args.preset,
        "validation_metric": args.validation_metric,
    }
    section.update({k: v for k, v in overrides.items() if v is not None})
    section["seed"] = args.seed if args.seed is not None else int(section.get("seed", _seed(None, config)))
    try:
        return TrainConfig.from_json({**section, "loss": LossConfig(**loss)})
    except TypeError as exc:
        raise ConfigError(f"bad training config: {exc}") from exc


def cmd_train(args) -> int:
    config = _load_config(args.config)
    manifest = DatasetManifest.load(args.manifest)
    resume = Checkpoint.load(args.resume) if args.resume else None
    if resume is not None:
        base = TrainConfig.from_json(resume.config)
        cfg = base if args.epochs is None else TrainConfig.from_json({**base.to_json(), "epochs": args.epochs})
    else:
        cfg = _train_config(args, config)
    out = _outdir(args.out)
    (out / "config.json").write_text(json.dumps(cfg.to_json(), indent=2, sort_keys=True) + "\n")
    result = train(cfg, manifest, out, resume=resume)
    best = result.best
    print(f"trained to epoch {cfg.epochs}; best epoch {best.epoch} (val pixel AUC {best.val_metric})")
    print(f"metrics: {out / 'metrics.csv'}  best checkpoint: {out / 'best.spgc'}")
    return 0


# ------------------------------------------------------------------ infer


def _threshold(args) -> float:
    if args.threshold is not None:
        return args.threshold
    if args.summary:
        path = Path(args.summary)
        if not path.exists():
            raise MissingArtifact(f"summary not found: {path}")
        return float(json.loads(path.read_text())["threshold"])
    raise ConfigError("pass --threshold T or --summary <eval summary.json>")


def cmd_infer(args) -> int:
    threshold = _threshold(args)
    checkpoint = Checkpoint.load(args.checkpoint)
    if args.manifest:
        manifest = DatasetManifest.load(args.manifest)
        items = [(r.id, manifest.root / r.image_path) for r in manifest.split(args.split)]
    elif args.images:
        items = [(Path(p).stem, Path(p)) for p in args.images]
    else:
        raise ConfigError("pass --manifest (with --split) or one or more --images")
    for _, path in items:
        if not Path(path).exists():
            raise MissingArtifact(f"image not found: {path}")

    out = _outdir(args.out)
    for sub in ("soft", "binary", "records"):
        (out / sub).mkdir(exist_ok=True)
    generator = checkpoint.build_generator()
    records = []
    for id_, path in items:
        image = ImageRGB.load(path)
        soft = estimate_masks(generator, [image])[0]
        result = classify(detection_score(soft), threshold)
        soft.save(out / "soft" / f"{id_}.png")
        localize(soft, args.pixel_threshold).save(out / "binary" / f"{id_}.png")
        record = {"id": id_, **result.to_dict()}
        (out / "records" / f"{id_}.json").write_text(json.dumps(record, indent=2) + "\n")
        records.append(record)
        print(f"{id_}: score {result.score:.4f} -> {result.label.value}")
    (out / "detections.json").write_text(json.dumps(records, indent=2) + "\n")
    return 0


# ------------------------------------------------------------------- eval


def _predictions_from_masks(manifest: DatasetManifest, split: str, mask_dir: Path) -> list[Prediction]:
    out = []
    for record in manifest.split(split):
        path = mask_dir / f"{record.id}.png"
        if not path.exists():
            raise MissingArtifact(f"no mask estimate for {record.id} in {mask_dir}")
        with Image.open(path) as im:
            soft = SoftMask(np.asarray(im.convert("L"), dtype=np.float32) / 255.0)
        truth = manifest.load_pair(record).mask
        out.append(Prediction(record.id, SizeClass(record.size_class), truth, soft))
    return out


def cmd_eval(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    out = _outdir(args.out)
    if args.masks:
        predictions = _predictions_from_masks(manifest, args.split, Path(args.masks))
        loss_mode = "given"
    elif args.checkpoint:
        checkpoint = Checkpoint.load(args.checkpoint)
        predictions = predict_split(checkpoint, manifest, args.split)
        loss_mode = checkpoint.recon_mode
    else:
        raise ConfigError("pass --checkpoint or --masks")
    report = evaluate_predictions(predictions, loss_mode, args.split, args.threshold)
    summary = write_report(out, report)
    print(json.dumps(summary, indent=2, sort_keys=True))

    if args.compare:
        reports = {loss_mode.upper(): report}
        for path in args.compare:
            other = Checkpoint.load(path)
            label = other.recon_mode.upper()
            while label in reports:
                label += "'"
            rep = evaluate_predictions(predict_split(other, manifest, args.split), other.recon_mode, args.split)
            write_report(out, rep, prefix=f"{other.recon_mode}_")
            reports[label] = rep
        det = {k: (r.detection.roc.fpr, r.detection.roc.tpr) for k, r in reports.items()}
        loc = {k: thin(r.localization.roc.thresholds, r.localization.roc.fpr, r.localization.roc.tpr)[1:]
               for k, r in reports.items()}
        plot_curves(out / "compare_roc_detection.svg", "roc", det, title="Detection ROC")
        plot_curves(out / "compare_roc_localization.svg", "roc", loc, title="Localization ROC")
        comparison = {k: r.summary() for k, r in reports.items()}
        (out / "compare.json").write_text(json.dumps(comparison, indent=2, sort_keys=True) + "\n")
        for k, r in reports.items():
            print(f"{k}: detection AUC {r.detection.roc.auc:.4f}, localization AUC {r.localization.roc.auc:.4f}")
    return 0


# ------------------------------------------------------------------- plot


def cmd_plot(args) -> int:
    curves, kinds = {}, set()
    labels = args.labels or [Path(p).stem for p in args.csv]
    if len(labels) != len(args.csv):
        raise ConfigError("--labels must name every CSV")
    for label, path in zip(labels, args.csv):
        if not Path(path).exists():
            raise MissingArtifact(f"curve CSV not found: {path}")
        kind, x, y = read_curve_csv(path)
        kinds.add(kind)
        curves[label] = (x, y)
    if len(kinds) != 1:
        raise ConfigError("cannot overlay ROC and PR curves in one plot")
    target = Path(args.out)
    target.parent.mkdir(parents=True, exist_ok=True)
    plot_curves(target, kinds.pop(), curves, title=args.title or "")
    print(target)
    return 0


# ----------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="splicegan", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--workers", type=int, default=default_workers(),
                        help="parallel workers for data stages (default: logical cores)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize the spliced corpus and its split manifest")
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="corpus directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--scale", type=float, help="fraction of the reference per-class counts (default 1)")
    p.add_argument("--bases", help="directory of PNG base rasters instead of procedural ones")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train generator and discriminator")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--epochs", type=int)
    p.add_argument("--loss", choices=("bce", "l1"))
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--preset", choices=("paper", "tiny"))
    p.add_argument("--validation-metric", choices=VALIDATION_METRICS,
                   help="model-selection signal on the validation split (default pixel_auc)")
    p.add_argument("--seed", type=int)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="estimate masks and detection labels")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest")
    p.add_argument("--split", default="test")
    p.add_argument("--images", nargs="+")
    p.add_argument("--threshold", type=float, help="detection threshold T on the 0-255 scale")
    p.add_argument("--summary", help="take T from an eval summary.json")
    p.add_argument("--pixel-threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="detection and localization ROC/PR on a split")
    p.add_argument("--checkpoint")
    p.add_argument("--masks", help="directory of <id>.png mask estimates instead of a checkpoint")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--threshold", type=float, help="fixed T (default: max TPR-FPR point)")
    p.add_argument("--compare", nargs="+", metavar="CHECKPOINT", help="overlay further checkpoints, e.g. an L1 run")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="render curve CSVs to an SVG")
    p.add_argument("csv", nargs="+")
    p.add_argument("--labels", nargs="+")
    p.add_argument("--title")
    p.add_argument("--out", required=True, help="output .svg path")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except SpliceGanError as exc:
        print(f"splicegan {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"splicegan {args.command}: {exc}", file=sys.stderr)
        return MissingArtifact.exit_code
    except OSError as exc:
        print(f"splicegan {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
