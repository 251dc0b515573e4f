"""Evaluation metrics for binary glass maps: IoU, MAE, balanced error rate,
TP/TN/FP/FN map decomposition, and directory-level evaluation reports."""

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import decode_mask, save_mask_png
from PIL import Image


@dataclass
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def n_p(self) -> int:
        return self.tp + self.fn

    @property
    def n_n(self) -> int:
        return self.tn + self.fp


def _check_pair(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    if not np.isin(gt, (0, 1)).all():
        raise ValueError("ground truth must be binary")
    return pred, gt


def confusion(pred, gt, threshold: float = 0.5) -> ConfusionCounts:
    """Binarize pred at ``threshold`` and count the four agreement categories."""
    pred, gt = _check_pair(pred, gt)
    p = pred >= threshold
    g = gt.astype(bool)
    return ConfusionCounts(
        tp=int(np.sum(p & g)),
        tn=int(np.sum(~p & ~g)),
        fp=int(np.sum(p & ~g)),
        fn=int(np.sum(~p & g)),
    )


def confusion_maps(pred, gt, threshold: float = 0.5) -> dict:
    """The four indicator maps (tp, tn, fp, fn) as float {0,1} arrays."""
    pred, gt = _check_pair(pred, gt)
    p = pred >= threshold
    g = gt.astype(bool)
    return {
        "tp": (p & g).astype(np.float32),
        "tn": (~p & ~g).astype(np.float32),
        "fp": (p & ~g).astype(np.float32),
        "fn": (~p & g).astype(np.float32),
    }


def iou(c: ConfusionCounts) -> float:
    """tp / (tp + fp + fn); an empty union scores 1 by convention."""
    union = c.tp + c.fp + c.fn
    if union == 0:
        warnings.warn("empty union (empty GT and empty prediction): IoU defined as 1")
        return 1.0
    return float(c.tp / union)


def mae(pred, gt) -> float:
    """Mean absolute error on the SOFT prediction (no thresholding)."""
    pred, gt = _check_pair(pred, gt)
    if pred.min() < 0 or pred.max() > 1:
        raise ValueError("prediction values must lie in [0,1]")
    return float(np.abs(pred - gt).mean())


def ber(c: ConfusionCounts) -> float:
    """Balanced error rate in percent: 100 * (1 - (TPR + TNR) / 2)."""
    if c.n_p == 0 or c.n_n == 0:
        raise ValueError("BER undefined when one class is absent from the GT")
    return 100.0 * (1.0 - 0.5 * (c.tp / c.n_p + c.tn / c.n_n))


@dataclass
class MetricReport:
    per_image: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    unmatched_pred: list = field(default_factory=list)
    unmatched_gt: list = field(default_factory=list)
    ber_skipped: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "aggregates": self.aggregates,
            "per_image": self.per_image,
            "unmatched_pred": self.unmatched_pred,
            "unmatched_gt": self.unmatched_gt,
            "ber_skipped": self.ber_skipped,
        }


def _decode_soft(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float64) / 255.0


def _stems(directory) -> dict:
    return {
        p.stem: p
        for p in sorted(Path(directory).iterdir())
        if p.suffix.lower() in (".png", ".jpg", ".jpeg")
    }


def evaluate_dataset(pred_dir, gt_dir, out_dir=None, threshold: float = 0.5) -> MetricReport:
    """Evaluate every prediction/GT pair matched by filename stem.

    Per-image rows carry IoU, MAE, and BER (None when the GT has a single
    class). Aggregates report IoU pooled over all pixels and MAE/BER averaged
    per image, plus the opposite conventions for transparency. When ``out_dir``
    is given, writes metrics.json and metrics.csv.
    """
    preds = _stems(pred_dir)
    gts = _stems(gt_dir)
    report = MetricReport(
        unmatched_pred=sorted(set(preds) - set(gts)),
        unmatched_gt=sorted(set(gts) - set(preds)),
    )
    common = sorted(set(preds) & set(gts))
    pooled = ConfusionCounts(0, 0, 0, 0)
    abs_err_sum = 0.0
    pixel_total = 0
    for stem in common:
        pred = _decode_soft(preds[stem])
        gt = decode_mask(gts[stem])
        c = confusion(pred, gt, threshold)
        row = {"stem": stem, "iou": iou(c), "mae": mae(pred, gt)}
        if c.n_p == 0 or c.n_n == 0:
            warnings.warn(f"{stem}: single-class GT, skipping BER")
            report.ber_skipped.append(stem)
            row["ber"] = None
        else:
            row["ber"] = ber(c)
        report.per_image.append(row)
        pooled = ConfusionCounts(pooled.tp + c.tp, pooled.tn + c.tn, pooled.fp + c.fp, pooled.fn + c.fn)
        abs_err_sum += np.abs(pred - gt).sum()
        pixel_total += gt.size

    if common:
        ber_rows = [r["ber"] for r in report.per_image if r["ber"] is not None]
        report.aggregates = {
            "n_images": len(common),
            "iou": iou(pooled),
            "mae": float(np.mean([r["mae"] for r in report.per_image])),
            "ber": float(np.mean(ber_rows)) if ber_rows else None,
            "iou_image_mean": float(np.mean([r["iou"] for r in report.per_image])),
            "mae_pixel_pooled": float(abs_err_sum / pixel_total),
            "ber_pixel_pooled": ber(pooled) if pooled.n_p > 0 and pooled.n_n > 0 else None,
        }
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "metrics.json", "w") as fh:
            json.dump(report.to_dict(), fh, indent=2)
        with open(out_dir / "metrics.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["stem", "iou", "mae", "ber"])
            for row in report.per_image:
                writer.writerow([row["stem"], row["iou"], row["mae"], row["ber"]])
    return report


def export_decomposition(pred_dir, gt_dir, out_dir, threshold: float = 0.5) -> list:
    """Write the four {0,255} indicator PNGs per matched image; returns the stems."""
    preds = _stems(pred_dir)
    gts = _stems(gt_dir)
    out_dir = Path(out_dir)
    done = []
    for stem in sorted(set(preds) & set(gts)):
        maps = confusion_maps(_decode_soft(preds[stem]), decode_mask(gts[stem]), threshold)
        for kind, m in maps.items():
            save_mask_png(out_dir / f"{stem}.{kind}.png", m)
        done.append(stem)
    return done
