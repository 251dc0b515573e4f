"""Shared building blocks: the 3x3 conv + BatchNorm + ReLU unit and resampling helpers."""

import torch
import torch.nn as nn
import torch.nn.functional as F


class ConvBlock(nn.Module):
    """3x3 convolution followed by BatchNorm and ReLU."""

    def __init__(self, in_channels: int, out_channels: int, stride: int = 1):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, 3, stride=stride, padding=1, bias=False)
        self.bn = nn.BatchNorm2d(out_channels)
        self.relu = nn.ReLU(inplace=True)

    def forward(self, x):
        return self.relu(self.bn(self.conv(x)))


def bilinear_resample(x: torch.Tensor, size) -> torch.Tensor:
    """Bilinear resize to (H, W) using the half-pixel-centers convention."""
    size = tuple(size)
    if x.shape[-2:] == size:
        return x
    return F.interpolate(x, size=size, mode="bilinear", align_corners=False)


def nearest_resample(x: torch.Tensor, size) -> torch.Tensor:
    """Nearest-neighbor resize; keeps {0,1} maps binary."""
    size = tuple(size)
    if x.shape[-2:] == size:
        return x
    return F.interpolate(x, size=size, mode="nearest")
