"""Criss-cross strip attention: every spatial position attends to the H+W
row/column mean strips instead of all HxW positions, shrinking the affinity
map from (HW)^2 to HW*(H+W)."""

import torch
import torch.nn as nn
import torch.nn.functional as F


def strip_pool(feature: torch.Tensor) -> torch.Tensor:
    """Collapse a BxCxHxW map into BxCx(H+W) strips: H row means (pooled over
    width) followed by W column means (pooled over height)."""
    if feature.dim() != 4:
        raise ValueError(f"expected BxCxHxW, got shape {tuple(feature.shape)}")
    rows = feature.mean(dim=3)
    cols = feature.mean(dim=2)
    return torch.cat([rows, cols], dim=2)


def affinity(q_flat: torch.Tensor, k_strips: torch.Tensor) -> torch.Tensor:
    """Row-softmax of query/strip-key dot products.

    q_flat is Bx(HW)xC', k_strips is BxC'x(H+W); each of the HW rows of the
    result sums to 1 over the H+W strip positions. Computed with per-row max
    subtraction for stability.
    """
    if q_flat.shape[-1] != k_strips.shape[-2]:
        raise ValueError(
            f"channel mismatch: queries have {q_flat.shape[-1]}, keys have {k_strips.shape[-2]}"
        )
    energy = torch.bmm(q_flat, k_strips)
    if not torch.isfinite(energy).all():
        raise FloatingPointError("non-finite attention energies")
    return F.softmax(energy, dim=-1)


class CrissCrossStripAttention(nn.Module):
    """Strip attention with a residual connection.

    Queries and keys are 1x1 projections to ``attn_channels`` (< in_channels);
    keys and values are strip-pooled. The attended result is projected back to
    ``in_channels`` by a bias-free 1x1 convolution and added to the input, so
    zeroed value weights leave the input untouched bitwise.
    """

    def __init__(self, in_channels: int, attn_channels: int | None = None):
        super().__init__()
        if attn_channels is None:
            attn_channels = max(in_channels // 8, 1)
        if not 0 < attn_channels < in_channels:
            raise ValueError(
                f"attn_channels must satisfy 0 < attn_channels < in_channels, got {attn_channels} vs {in_channels}"
            )
        self.in_channels = in_channels
        self.attn_channels = attn_channels
        self.query = nn.Conv2d(in_channels, attn_channels, 1)
        self.key = nn.Conv2d(in_channels, attn_channels, 1)
        self.value = nn.Conv2d(in_channels, attn_channels, 1, bias=False)
        self.out = nn.Conv2d(attn_channels, in_channels, 1, bias=False)

    def forward(self, f_ba: torch.Tensor) -> torch.Tensor:
        if f_ba.shape[1] != self.in_channels:
            raise ValueError(f"expected {self.in_channels} input channels, got {f_ba.shape[1]}")
        b, _, h, w = f_ba.shape
        q_flat = self.query(f_ba).flatten(2).transpose(1, 2)  # B x HW x C'
        k_strips = strip_pool(self.key(f_ba))                 # B x C' x (H+W)
        v_strips = strip_pool(self.value(f_ba))
        attn = affinity(q_flat, k_strips)                     # B x HW x (H+W)
        attended = torch.bmm(attn, v_strips.transpose(1, 2))  # B x HW x C'
        attended = attended.transpose(1, 2).reshape(b, self.attn_channels, h, w)
        return self.out(attended) + f_ba
