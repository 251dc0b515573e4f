"""Correction stage: per-level modules that predict FN and FP mistake maps,
augment features with FN evidence, suppress FP evidence, and emit refined glass
predictions top-down through the pyramid."""

from dataclasses import dataclass

import torch
import torch.nn as nn

from .blocks import ConvBlock, bilinear_resample

REVERSE_MODES = ("sigmoid_complement", "negate")


@dataclass
class McLevelOutput:
    refined_features: torch.Tensor
    glass_pred: torch.Tensor
    fn_pred: torch.Tensor
    fp_pred: torch.Tensor
    fn_features: torch.Tensor
    fp_features: torch.Tensor


@dataclass
class CascadeSeed:
    """Initial mistake-feature state threaded into the deepest correction module."""
    fn_features: torch.Tensor
    fp_features: torch.Tensor


class MistakeCorrection(nn.Module):
    """One correction level.

    The FN branch reverses the input features, extracts mistake features
    (concatenated with upsampled higher-level FN features when present),
    predicts a soft FN map, and adds the masked reversed features back to the
    input. The FP branch does the same from the raw input and subtracts the
    masked features, making the result less sensitive to FP distractions.
    """

    def __init__(self, channels: int, has_higher: bool = True, reverse_mode: str = "sigmoid_complement"):
        super().__init__()
        if reverse_mode not in REVERSE_MODES:
            raise ValueError(f"unknown reverse_mode {reverse_mode!r}; expected one of {REVERSE_MODES}")
        self.has_higher = has_higher
        self.reverse_mode = reverse_mode
        in_channels = channels * 2 if has_higher else channels
        self.fn_block = ConvBlock(in_channels, channels)
        self.fp_block = ConvBlock(in_channels, channels)
        self.fn_head = nn.Conv2d(channels, 1, 1)
        self.fp_head = nn.Conv2d(channels, 1, 1)
        self.glass_head = nn.Conv2d(channels, 1, 1)

    def _reverse(self, f_en):
        if self.reverse_mode == "negate":
            return -f_en
        return 1.0 - torch.sigmoid(f_en)

    def forward(self, f_en: torch.Tensor, higher=None, with_intermediates: bool = False):
        if (higher is not None) != self.has_higher:
            raise ValueError(
                f"module configured with has_higher={self.has_higher} but higher is "
                f"{'present' if higher is not None else 'absent'}"
            )
        size = f_en.shape[-2:]
        f_rev = self._reverse(f_en)

        fn_in = f_rev
        fp_in = f_en
        if higher is not None:
            fn_in = torch.cat([f_rev, bilinear_resample(higher.fn_features, size)], dim=1)
            fp_in = torch.cat([f_en, bilinear_resample(higher.fp_features, size)], dim=1)

        fn_feat = self.fn_block(fn_in)
        fn_pred = torch.sigmoid(self.fn_head(fn_feat))
        masked_fn = f_rev * fn_pred
        f_aug = f_en + masked_fn

        fp_feat = self.fp_block(fp_in)
        fp_pred = torch.sigmoid(self.fp_head(fp_feat))
        masked_fp = f_en * fp_pred
        refined = f_aug - masked_fp

        if not torch.isfinite(refined).all():
            raise FloatingPointError("non-finite activations in correction module")
        out = McLevelOutput(
            refined_features=refined,
            glass_pred=torch.sigmoid(self.glass_head(refined)),
            fn_pred=fn_pred,
            fp_pred=fp_pred,
            fn_features=fn_feat,
            fp_features=fp_feat,
        )
        if with_intermediates:
            return out, {"f_rev": f_rev, "masked_fn": masked_fn, "f_aug": f_aug, "masked_fp": masked_fp}
        return out

    def mc_forward(self, f_en, higher=None, with_intermediates: bool = False):
        return self(f_en, higher, with_intermediates)


def correction_cascade(enhanced, modules) -> list:
    """Run correction modules deepest-first, threading FN/FP features downward.

    ``enhanced`` is ordered deepest level first. With one module per level the
    first module runs without higher-level features. With one module fewer than
    levels, the deepest level acts as a parameter-free seed: its features are
    passed as the initial FN/FP mistake features and every module receives a
    higher-level input. Returns one McLevelOutput per module, deepest-first.
    """
    enhanced = list(enhanced)
    modules = list(modules)
    if len(modules) == len(enhanced):
        higher = None
    elif len(modules) == len(enhanced) - 1:
        higher = CascadeSeed(fn_features=enhanced[0], fp_features=enhanced[0])
        enhanced = enhanced[1:]
    else:
        raise ValueError(
            f"cascade needs as many modules as levels (or one fewer for a seeded run); "
            f"got {len(modules)} modules for {len(enhanced)} levels"
        )
    outputs = []
    for f_en, module in zip(enhanced, modules):
        out = module(f_en, higher)
        outputs.append(out)
        higher = out
    return outputs
