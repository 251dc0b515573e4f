"""Command-line entry point covering the full workflow: synthetic data
generation, edge/mistake GT synthesis, training, inference, evaluation, and
confusion-map export.

Exit codes: 0 success, 1 runtime error, 2 usage error. Config precedence:
CLI flag > config file > built-in default.
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import data, metrics, synth, trainer
from .backbone import VARIANTS, BackboneConfig
from .losses import LossWeights
from .trainer import TrainConfig

# flat key=value schema accepted by --config files and --set overrides
CONFIG_KEYS = {
    "lr0": float,
    "momentum": float,
    "weight_decay": float,
    "poly_power": float,
    "batch_size": int,
    "grad_accum": int,
    "max_iters": int,
    "seed": int,
    "input_size": int,
    "checkpoint_every": int,
    "out_dir": str,
    "augment": bool,
    "num_threads": int,
    "backbone": str,
    "reduced_channels": int,
    "pretrained_weights_path": str,
    "gamma": float,
    "window": int,
    "literal_bce_norm": bool,
    "edge_weight_source": str,
    "reverse_mode": str,
    "enhance_self": bool,
}


def _parse_value(key: str, raw: str):
    kind = CONFIG_KEYS[key]
    if kind is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key} expects a boolean, got {raw!r}")
    return kind(raw)


def _read_config_file(path) -> dict:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise KeyError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _parse_value(key, raw.strip("\"'"))
    return values


def _train_config(args, parser) -> TrainConfig:
    values = {}
    if args.config:
        try:
            values.update(_read_config_file(args.config))
        except (KeyError, ValueError) as exc:
            parser.error(str(exc))
    for item in args.set or []:
        if "=" not in item:
            parser.error(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        key = key.strip()
        if key not in CONFIG_KEYS:
            parser.error(f"unknown config key {key!r}; known keys: {', '.join(sorted(CONFIG_KEYS))}")
        try:
            values[key] = _parse_value(key, raw.strip())
        except ValueError as exc:
            parser.error(str(exc))
    for key in ("lr0", "momentum", "weight_decay", "poly_power", "batch_size", "grad_accum",
                "max_iters", "seed", "checkpoint_every", "out_dir", "augment"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if args.input_size is not None:
        values["input_size"] = args.input_size
    if args.backbone is not None:
        values["backbone"] = args.backbone
    if args.reduced_channels is not None:
        values["reduced_channels"] = args.reduced_channels

    backbone = BackboneConfig(
        variant=values.pop("backbone", "resnet50"),
        reduced_channels=values.pop("reduced_channels", 64),
        pretrained_weights_path=values.pop("pretrained_weights_path", None),
    )
    loss = LossWeights(
        gamma=values.pop("gamma", 5.0),
        window=values.pop("window", 31),
        literal_bce_norm=values.pop("literal_bce_norm", False),
        edge_weight_source=values.pop("edge_weight_source", "edge"),
    )
    size = values.pop("input_size", 416)
    values["input_size"] = (size, size) if isinstance(size, int) else tuple(size)
    try:
        config = TrainConfig(backbone=backbone, loss=loss, **values)
    except (TypeError, ValueError) as exc:
        parser.error(str(exc))
    print(f"[config] hash={config.config_hash()} {json.dumps(dataclasses.asdict(config), default=str)}")
    return config


def _matched_stems(a_dir, b_dir):
    a = metrics._stems(a_dir)
    b = metrics._stems(b_dir)
    return a, b, sorted(set(a) & set(b))


def _cmd_gen_synth(args) -> int:
    config = synth.SynthConfig(
        n_images=args.n,
        size=(args.size, args.size),
        glass_alpha_range=(args.alpha_min, args.alpha_max),
        frame_width_px=args.frame_width,
        background_texture=args.texture,
        seed=args.seed,
    )
    manifest = synth.generate(config, args.out)
    print(f"wrote {config.n_images} samples under {args.out} (manifest: {manifest})")
    return 0


def _cmd_train(args, parser) -> int:
    config = _train_config(args, parser)
    trainer.train(config, args.manifest, resume_from=args.resume, dry_run=args.dry_run)
    if args.dry_run:
        print("dry run: config and data validated, no weights updated")
    else:
        print(f"trained {config.max_iters} iterations; checkpoints under {config.out_dir}")
    return 0


def _cmd_predict(args) -> int:
    summary = trainer.predict(args.ckpt, args.images, args.out)
    if args.json:
        print(json.dumps(summary))
    else:
        print(f"wrote {len(summary['written'])} predictions, skipped {len(summary['skipped'])}")
        for path in summary["skipped"]:
            print(f"  skipped: {path}")
    return 0


def _cmd_eval(args) -> int:
    report = metrics.evaluate_dataset(args.pred, args.gt, out_dir=args.out, threshold=args.threshold)
    if not report.per_image:
        print("error: no prediction/GT pairs share a filename stem", file=sys.stderr)
        if report.unmatched_pred:
            print(f"  predictions without GT: {report.unmatched_pred}", file=sys.stderr)
        if report.unmatched_gt:
            print(f"  GT without predictions: {report.unmatched_gt}", file=sys.stderr)
        return 1
    agg = report.aggregates
    if args.json:
        print(json.dumps(report.to_dict()))
    else:
        ber_text = f"{agg['ber']:.2f}" if agg["ber"] is not None else "n/a"
        print(f"IoU={agg['iou']:.3f} MAE={agg['mae']:.3f} BER={ber_text}")
        if report.unmatched_pred or report.unmatched_gt:
            print(f"unmatched: {len(report.unmatched_pred)} predictions, {len(report.unmatched_gt)} GT files")
    return 0


def _cmd_gen_edge_gt(args) -> int:
    masks = metrics._stems(args.masks)
    out = Path(args.out)
    for stem, path in masks.items():
        edge = data.generate_edge_gt(data.decode_mask(path), args.band_radius)
        data.save_mask_png(out / f"{stem}.png", edge)
    print(f"wrote {len(masks)} edge maps to {out}")
    return 0


def _cmd_gen_mistake_gt(args) -> int:
    preds, gts, common = _matched_stems(args.pred, args.gt)
    fp_dir, fn_dir = Path(args.out_fp), Path(args.out_fn)
    for stem in common:
        pred = metrics._decode_soft(preds[stem])
        gt = data.decode_mask(gts[stem])
        fp, fn = data.generate_mistake_gt(pred, gt, args.threshold)
        data.save_mask_png(fp_dir / f"{stem}.png", fp)
        data.save_mask_png(fn_dir / f"{stem}.png", fn)
    skipped = sorted(set(preds) ^ set(gts))
    print(f"wrote FP/FN maps for {len(common)} images; {len(skipped)} unmatched stems skipped")
    return 0


def _cmd_decompose(args) -> int:
    done = metrics.export_decomposition(args.pred, args.gt, args.out, args.threshold)
    print(f"wrote 4 decomposition maps for each of {len(done)} images to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glasseg",
        description="Glass segmentation workflow: synthesize data, train, predict, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a synthetic glass-scene dataset")
    p.add_argument("--n", type=int, default=16, help="number of images")
    p.add_argument("--size", type=int, default=64, help="square image side in pixels")
    p.add_argument("--alpha-min", type=float, default=0.25, help="min glass blend factor")
    p.add_argument("--alpha-max", type=float, default=0.45, help="max glass blend factor")
    p.add_argument("--frame-width", type=int, default=2, help="pane frame width in pixels")
    p.add_argument("--texture", choices=synth.TEXTURES, default="shapes", help="background texture family")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--out", required=True, help="output dataset root")

    p = sub.add_parser("train", help="train the segmentation network")
    p.add_argument("--manifest", required=True, help="JSONL manifest of training samples")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--lr0", type=float, help="initial learning rate")
    p.add_argument("--momentum", type=float, help="SGD momentum")
    p.add_argument("--weight-decay", dest="weight_decay", type=float, help="L2 weight decay")
    p.add_argument("--poly-power", dest="poly_power", type=float, help="poly decay exponent")
    p.add_argument("--batch-size", dest="batch_size", type=int, help="samples per optimizer step")
    p.add_argument("--grad-accum", dest="grad_accum", type=int, help="micro-batch accumulation factor")
    p.add_argument("--max-iters", dest="max_iters", type=int, help="total optimizer steps")
    p.add_argument("--seed", type=int, help="run seed")
    p.add_argument("--input-size", dest="input_size", type=int, help="square network input side")
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int, help="checkpoint period")
    p.add_argument("--backbone", choices=VARIANTS, help="backbone variant")
    p.add_argument("--reduced-channels", dest="reduced_channels", type=int, help="pyramid channel width")
    p.add_argument("--out", dest="out_dir", help="run output directory")
    p.add_argument("--augment", action="store_true", default=None,
                   help="enable flip/jitter/crop training augmentation")
    p.add_argument("--resume", help="checkpoint file or run dir to resume from")
    p.add_argument("--dry-run", action="store_true", help="validate config and data, no updates")

    p = sub.add_parser("predict", help="write soft glass maps for a directory of images")
    p.add_argument("--ckpt", required=True, help="checkpoint file or run dir")
    p.add_argument("--images", required=True, help="input image directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--json", action="store_true", help="machine-readable summary")

    p = sub.add_parser("eval", help="evaluate predictions against ground truth")
    p.add_argument("--pred", required=True, help="prediction directory")
    p.add_argument("--gt", required=True, help="ground-truth mask directory")
    p.add_argument("--out", help="where to write metrics.json / metrics.csv")
    p.add_argument("--threshold", type=float, default=0.5, help="binarization threshold")
    p.add_argument("--json", action="store_true", help="machine-readable report")

    p = sub.add_parser("gen-edge-gt", help="derive boundary-band edge GT from masks")
    p.add_argument("--masks", required=True, help="mask directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--band-radius", dest="band_radius", type=int, default=2, help="band half-width in pixels")

    p = sub.add_parser("gen-mistake-gt", help="derive FP/FN mistake GT from baseline predictions")
    p.add_argument("--pred", required=True, help="baseline prediction directory")
    p.add_argument("--gt", required=True, help="ground-truth mask directory")
    p.add_argument("--out-fp", dest="out_fp", required=True, help="FP output directory")
    p.add_argument("--out-fn", dest="out_fn", required=True, help="FN output directory")
    p.add_argument("--threshold", type=float, default=0.5, help="prediction binarization threshold")

    p = sub.add_parser("decompose", help="export TP/TN/FP/FN indicator maps")
    p.add_argument("--pred", required=True, help="prediction directory")
    p.add_argument("--gt", required=True, help="ground-truth mask directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threshold", type=float, default=0.5)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "gen-synth":
            return _cmd_gen_synth(args)
        if args.command == "train":
            return _cmd_train(args, parser)
        if args.command == "predict":
            return _cmd_predict(args)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "gen-edge-gt":
            return _cmd_gen_edge_gt(args)
        if args.command == "gen-mistake-gt":
            return _cmd_gen_mistake_gt(args)
        if args.command == "decompose":
            return _cmd_decompose(args)
        parser.error(f"unknown command {args.command!r}")
    except SystemExit:
        raise
    except Exception as exc:  # runtime failures map to exit code 1
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
