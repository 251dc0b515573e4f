"""Full network assembly: backbone pyramid -> strip attention per level ->
edge block -> edge-enhanced features -> mistake-correction cascade."""

from dataclasses import dataclass

import torch
import torch.nn as nn

from .backbone import Backbone, BackboneConfig
from .blocks import bilinear_resample
from .ccsa import CrissCrossStripAttention
from .correction import MistakeCorrection, correction_cascade
from .edge_block import EdgeBlock, enhance

SUPERVISED_LEVELS = 4


@dataclass
class ModelOutputs:
    glass_pred: torch.Tensor   # Bx1xHxW at input resolution
    edge_pred: torch.Tensor    # Bx1 at the finest pyramid resolution
    levels: list               # McLevelOutput per supervised scale, finest first


class GlassSegmentationModel(nn.Module):
    """Identification (attention + edge) and correction (FN/FP) stages.

    Attention runs at all five pyramid levels. The deepest enhanced level seeds
    the correction cascade as the initial mistake-feature state; the remaining
    four levels each get a correction module with supervised glass/FN/FP heads,
    so the four scale weights of the loss line up with the four supervised
    outputs and every parameter receives gradient.
    """

    def __init__(self, backbone_config: BackboneConfig,
                 reverse_mode: str = "sigmoid_complement",
                 enhance_self: bool = False):
        super().__init__()
        self.backbone = Backbone(backbone_config)
        channels = backbone_config.reduced_channels
        self.enhance_self = enhance_self
        self.attention = nn.ModuleList(CrissCrossStripAttention(channels) for _ in range(5))
        self.edge_block = EdgeBlock(channels)
        self.correction = nn.ModuleList(
            MistakeCorrection(channels, has_higher=True, reverse_mode=reverse_mode)
            for _ in range(SUPERVISED_LEVELS)
        )

    def forward(self, image: torch.Tensor) -> ModelOutputs:
        pyramid = self.backbone(image)
        attended = [att(f) for att, f in zip(self.attention, pyramid.levels)]
        f_edge, edge_pred = self.edge_block(attended[0], attended[4])
        if self.enhance_self:
            # ablation: each level re-adds its own features instead of the edge features
            enhanced = [enhance(f, f) for f in attended]
        else:
            enhanced = [enhance(f, f_edge) for f in attended]
        outputs = correction_cascade(list(reversed(enhanced)), self.correction)
        finest = outputs[-1].glass_pred
        glass_pred = bilinear_resample(finest, image.shape[-2:])
        return ModelOutputs(glass_pred=glass_pred, edge_pred=edge_pred, levels=list(reversed(outputs)))
