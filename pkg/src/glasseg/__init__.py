"""Glass segmentation: a context/edge identification stage followed by a
false-positive / false-negative mistake-correction cascade, plus the loss
stack, metrics, training loop, and a synthetic desk-scale benchmark."""

__version__ = "0.1.0"

from .backbone import Backbone, BackboneConfig, FeaturePyramid
from .ccsa import CrissCrossStripAttention, affinity, strip_pool
from .correction import McLevelOutput, MistakeCorrection, correction_cascade
from .edge_block import EdgeBlock, enhance
from .losses import LossBreakdown, LossWeights, total_loss
from .model import GlassSegmentationModel, ModelOutputs
from .trainer import TrainConfig
