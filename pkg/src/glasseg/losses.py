"""Training objective: boundary-weighted BCE and IoU terms for the glass maps,
weighted BCE for the FN/FP mistake maps and the edge map, and the per-scale
weighted aggregate."""

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from .blocks import nearest_resample

PROB_EPS = 1e-7  # clamp inside logarithms
RANGE_TOL = 1e-6


@dataclass
class LossWeights:
    lambda_per_scale: tuple = (4.0, 4.0, 2.0, 1.0)  # finest scale first
    gamma: float = 5.0
    window: int = 31
    literal_bce_norm: bool = False  # alternate denominator sum(W-1) instead of sum(W)
    edge_weight_source: str = "edge"   # "edge" or "glass": which GT drives edge-loss pixel weights

    def __post_init__(self):
        if self.window % 2 == 0:
            raise ValueError(f"weight window must be odd, got {self.window}")
        if self.edge_weight_source not in ("edge", "glass"):
            raise ValueError(f"edge_weight_source must be 'edge' or 'glass', got {self.edge_weight_source!r}")


@dataclass
class LossBreakdown:
    total: float
    glass_per_scale: list
    fn_per_scale: list
    fp_per_scale: list
    edge: float

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "glass_per_scale": list(self.glass_per_scale),
            "fn_per_scale": list(self.fn_per_scale),
            "fp_per_scale": list(self.fp_per_scale),
            "edge": self.edge,
        }


@dataclass
class SupervisionTargets:
    """Full-resolution ground truth bundle; per-scale copies are produced by
    nearest-neighbor downsampling inside total_loss."""
    glass: torch.Tensor
    edge: torch.Tensor
    fp: list = field(default_factory=list)  # one map per baseline model
    fn: list = field(default_factory=list)


def _check_binary(gt: torch.Tensor, name: str = "gt") -> None:
    if not bool(((gt == 0) | (gt == 1)).all()):
        raise ValueError(f"{name} must be binary")


def _check_range(pred: torch.Tensor) -> None:
    if pred.min() < -RANGE_TOL or pred.max() > 1 + RANGE_TOL:
        raise ValueError("predictions must lie in [0,1]")


def pixel_weight(gt: torch.Tensor, window: int = 31, gamma: float = 5.0) -> torch.Tensor:
    """Boundary-emphasis weights: 1 + gamma * |zero-padded window mean - pixel|.

    Uniform regions get weight 1; pixels whose neighborhood disagrees with them
    (boundaries, speckle) get up to 1 + gamma.
    """
    if window % 2 == 0:
        raise ValueError(f"window must be odd, got {window}")
    _check_binary(gt)
    # zero-padded mean: the denominator is always window**2
    local_mean = F.avg_pool2d(gt, window, stride=1, padding=window // 2, count_include_pad=True)
    alpha = (local_mean - gt).abs()
    return 1.0 + gamma * alpha


def weighted_bce(pred: torch.Tensor, gt: torch.Tensor, w: torch.Tensor,
                 literal_norm: bool = False) -> torch.Tensor:
    """Pixel-weighted binary cross entropy, normalized by the weight sum.

    The alternate normalization divides by sum(W - 1) instead (guarded by a
    small epsilon; it degenerates on uniform masks where all weights are 1).
    """
    if pred.shape != gt.shape or pred.shape != w.shape:
        raise ValueError(f"shape mismatch: pred {tuple(pred.shape)}, gt {tuple(gt.shape)}, w {tuple(w.shape)}")
    _check_range(pred)
    p = pred.clamp(PROB_EPS, 1.0 - PROB_EPS)
    ce = -(gt * torch.log(p) + (1.0 - gt) * torch.log(1.0 - p))
    if literal_norm:
        denom = (w - 1.0).sum() + 1e-8
    else:
        denom = w.sum()
    return (w * ce).sum() / denom


def weighted_iou(pred: torch.Tensor, gt: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
    """One minus the weighted intersection-over-union; 0 on an empty union."""
    if pred.shape != gt.shape or pred.shape != w.shape:
        raise ValueError(f"shape mismatch: pred {tuple(pred.shape)}, gt {tuple(gt.shape)}, w {tuple(w.shape)}")
    _check_range(pred)
    inter = (gt * pred * w).sum()
    union = ((gt + pred - gt * pred) * w).sum()
    if union == 0:
        return pred.sum() * 0.0  # keeps the graph alive with a zero loss
    return 1.0 - inter / union


def mistake_loss(fn_pred, fp_pred, fn_gt, fp_gt, w, literal_norm: bool = False):
    """Weighted BCE of the FN and FP predictions against their mistake maps.

    Returns (fn term, fp term); the combined mistake loss is their sum.
    """
    l_fn = weighted_bce(fn_pred, fn_gt, w, literal_norm)
    l_fp = weighted_bce(fp_pred, fp_gt, w, literal_norm)
    return l_fn, l_fp


def total_loss(outputs, edge_pred, targets: SupervisionTargets, weights: LossWeights) -> tuple:
    """Multi-scale objective over the supervised correction levels plus the edge term.

    ``outputs`` are McLevelOutputs ordered to match ``weights.lambda_per_scale``
    (finest scale first). Glass, FN, and FP terms are computed at each output's
    own resolution against nearest-downsampled targets; the glass term is
    weighted BCE plus weighted IoU, and the per-scale sum is scaled by its
    lambda. Mistake terms average over the per-baseline GT pairs and vanish
    when no mistake supervision exists.

    Returns (scalar loss tensor, LossBreakdown).
    """
    if len(outputs) != len(weights.lambda_per_scale):
        raise ValueError(
            f"{len(outputs)} supervised outputs but {len(weights.lambda_per_scale)} scale weights"
        )
    if len(targets.fp) != len(targets.fn):
        raise ValueError(f"{len(targets.fp)} FP maps vs {len(targets.fn)} FN maps")
    glass_terms, fn_terms, fp_terms = [], [], []
    lit = weights.literal_bce_norm
    total = None
    for out, lam in zip(outputs, weights.lambda_per_scale):
        size = out.glass_pred.shape[-2:]
        g = nearest_resample(targets.glass, size)
        w_g = pixel_weight(g, weights.window, weights.gamma)
        l_glass = weighted_bce(out.glass_pred, g, w_g, lit) + weighted_iou(out.glass_pred, g, w_g)
        if targets.fn:
            pairs = [
                mistake_loss(out.fn_pred, out.fp_pred,
                             nearest_resample(fn_map, size), nearest_resample(fp_map, size),
                             w_g, lit)
                for fn_map, fp_map in zip(targets.fn, targets.fp)
            ]
            l_fn = sum(p[0] for p in pairs) / len(pairs)
            l_fp = sum(p[1] for p in pairs) / len(pairs)
        else:
            l_fn = out.fn_pred.sum() * 0.0
            l_fp = out.fp_pred.sum() * 0.0
        scale_total = lam * (l_glass + l_fn + l_fp)
        total = scale_total if total is None else total + scale_total
        glass_terms.append(l_glass)
        fn_terms.append(l_fn)
        fp_terms.append(l_fp)

    e = nearest_resample(targets.edge, edge_pred.shape[-2:])
    if weights.edge_weight_source == "edge":
        w_e = pixel_weight(e, weights.window, weights.gamma)
    else:
        w_e = pixel_weight(nearest_resample(targets.glass, edge_pred.shape[-2:]),
                           weights.window, weights.gamma)
    l_edge = weighted_bce(edge_pred, e, w_e, lit)
    total = total + l_edge

    breakdown = LossBreakdown(
        total=float(total.detach()),
        glass_per_scale=[float(t.detach()) for t in glass_terms],
        fn_per_scale=[float(t.detach()) for t in fn_terms],
        fp_per_scale=[float(t.detach()) for t in fp_terms],
        edge=float(l_edge.detach()),
    )
    return total, breakdown
