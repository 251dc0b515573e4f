"""Multi-scale feature extraction producing a five-level pyramid with a shared
reduced channel width."""

from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn as nn

from .blocks import ConvBlock

VARIANTS = ("resnet50", "resnext101", "tiny_random")
STRIDES = (4, 4, 8, 16, 32)


@dataclass
class BackboneConfig:
    variant: str = "resnet50"
    reduced_channels: int = 64
    pretrained_weights_path: str | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown backbone variant {self.variant!r}; expected one of {VARIANTS}")
        if self.reduced_channels < 8:
            raise ValueError(f"reduced_channels must be >= 8, got {self.reduced_channels}")


@dataclass
class FeaturePyramid:
    levels: list
    strides: tuple = STRIDES

    def __post_init__(self):
        if len(self.levels) != 5:
            raise ValueError(f"pyramid must have exactly 5 levels, got {len(self.levels)}")
        channels = {f.shape[1] for f in self.levels}
        if len(channels) != 1:
            raise ValueError(f"pyramid levels disagree on channel count: {sorted(channels)}")

    @property
    def channels(self) -> int:
        return self.levels[0].shape[1]


class _TinyEncoder(nn.Module):
    """Small randomly-initialized encoder for CPU-scale runs and tests."""

    def __init__(self):
        super().__init__()
        self.stem = nn.Sequential(
            nn.Conv2d(3, 16, 3, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(16),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
        )
        self.stage1 = ConvBlock(16, 24)
        self.stage2 = ConvBlock(24, 32, stride=2)
        self.stage3 = ConvBlock(32, 48, stride=2)
        self.stage4 = ConvBlock(48, 64, stride=2)
        self.out_channels = (16, 24, 32, 48, 64)

    def forward(self, x):
        f0 = self.stem(x)
        f1 = self.stage1(f0)
        f2 = self.stage2(f1)
        f3 = self.stage3(f2)
        f4 = self.stage4(f3)
        return [f0, f1, f2, f3, f4]


class _ResNetEncoder(nn.Module):
    def __init__(self, variant: str, weights_path: str | None):
        super().__init__()
        import torchvision.models as tvm

        builder = tvm.resnet50 if variant == "resnet50" else tvm.resnext101_32x8d
        net = builder(weights=None)
        if weights_path is not None:
            if not Path(weights_path).is_file():
                raise FileNotFoundError(f"backbone weights not found: {weights_path}")
            state = torch.load(weights_path, map_location="cpu", weights_only=True)
            net.load_state_dict(state, strict=False)
        self.stem = nn.Sequential(net.conv1, net.bn1, net.relu, net.maxpool)
        self.layer1 = net.layer1
        self.layer2 = net.layer2
        self.layer3 = net.layer3
        self.layer4 = net.layer4
        self.out_channels = (64, 256, 512, 1024, 2048)

    def forward(self, x):
        f0 = self.stem(x)
        f1 = self.layer1(f0)
        f2 = self.layer2(f1)
        f3 = self.layer3(f2)
        f4 = self.layer4(f3)
        return [f0, f1, f2, f3, f4]


class Backbone(nn.Module):
    """Encoder plus one 3x3 reduction convolution per level, so every pyramid
    level shares ``reduced_channels`` channels."""

    def __init__(self, config: BackboneConfig):
        super().__init__()
        self.config = config
        if config.variant == "tiny_random":
            self.encoder = _TinyEncoder()
        else:
            self.encoder = _ResNetEncoder(config.variant, config.pretrained_weights_path)
        self.reduce = nn.ModuleList(
            nn.Conv2d(c, config.reduced_channels, 3, padding=1) for c in self.encoder.out_channels
        )

    def forward(self, image: torch.Tensor) -> FeaturePyramid:
        if image.dim() != 4 or image.shape[1] != 3:
            raise ValueError(f"expected a Bx3xHxW image batch, got shape {tuple(image.shape)}")
        h, w = image.shape[-2:]
        if h % 32 or w % 32:
            raise ValueError(f"input spatial dims must be divisible by 32, got {h}x{w}")
        raw = self.encoder(image)
        levels = [conv(f) for conv, f in zip(self.reduce, raw)]
        for lvl, stride in zip(levels, STRIDES):
            if lvl.shape[-2:] != (h // stride, w // stride):
                raise RuntimeError(
                    f"level at stride {stride} has shape {tuple(lvl.shape[-2:])}, expected {(h // stride, w // stride)}"
                )
        return FeaturePyramid(levels=levels)

    def extract(self, image: torch.Tensor) -> FeaturePyramid:
        return self(image)
