"""Glass-edge feature modeling: fuse the finest attention level with upsampled
deep location features, predict an edge map, and inject the edge features back
into every pyramid level."""

import torch
import torch.nn as nn

from .blocks import ConvBlock, bilinear_resample


class EdgeBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.fuse = ConvBlock(channels, channels)
        self.head = nn.Conv2d(channels, 1, 1)

    def forward(self, f_fine: torch.Tensor, f_deep: torch.Tensor):
        """Edge features from the finest level plus upsampled deep features.

        Returns (edge features at f_fine's resolution, sigmoid edge prediction).
        """
        if f_fine.shape[1] != f_deep.shape[1]:
            raise ValueError(f"channel mismatch: {f_fine.shape[1]} vs {f_deep.shape[1]}")
        if f_deep.shape[-2] > f_fine.shape[-2] or f_deep.shape[-1] > f_fine.shape[-1]:
            raise ValueError("deep features must not be larger than the fine level")
        fused = self.fuse(f_fine + bilinear_resample(f_deep, f_fine.shape[-2:]))
        return fused, torch.sigmoid(self.head(fused))

    def fuse_edge(self, f_fine, f_deep):
        return self(f_fine, f_deep)


def enhance(f_level: torch.Tensor, f_edge: torch.Tensor) -> torch.Tensor:
    """Add edge features, bilinearly resampled to the level's size."""
    if f_level.shape[1] != f_edge.shape[1]:
        raise ValueError(f"channel mismatch: {f_level.shape[1]} vs {f_edge.shape[1]}")
    return f_level + bilinear_resample(f_edge, f_level.shape[-2:])
