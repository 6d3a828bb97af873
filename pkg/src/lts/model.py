"""The full locate-then-segment network."""

from dataclasses import dataclass, field

import torch
from torch import nn

from lts.backbone import Backbone, BackboneConfig
from lts.fusion import CrossModalFeature, Fusion, FusionConfig
from lts.localization import LocalizationConfig, Localizer, PositionPrior
from lts.segmentation import ASPPConfig, MaskPrediction, SegmentationHead
from lts.text_encoder import TextConfig, TextEncoder


@dataclass
class ModelConfig:
    text: TextConfig = field(default_factory=TextConfig)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    localization: LocalizationConfig = field(default_factory=LocalizationConfig)
    segmentation: ASPPConfig = field(default_factory=ASPPConfig)

    def validate(self):
        self.backbone.validate()
        self.fusion.validate()
        self.localization.validate()
        self.segmentation.validate()


@dataclass
class ModelOutput:
    prior: PositionPrior
    mask: MaskPrediction
    cross: CrossModalFeature
    f_text: torch.Tensor


class LTSModel(nn.Module):
    def __init__(self, vocab_size: int, config: ModelConfig | None = None):
        super().__init__()
        config = config or ModelConfig()
        config.validate()
        self.config = config
        self.text_encoder = TextEncoder(vocab_size, config.text)
        self.backbone = Backbone(config.backbone)
        text_dim = self.text_encoder.output_dim
        self.fusion = Fusion(self.backbone.channels, text_dim, config.fusion)
        self.localizer = Localizer(config.fusion.dim, text_dim, config.localization)
        self.segmenter = SegmentationHead(config.fusion.dim, config.segmentation)

    def forward(self, images: torch.Tensor, tokens: torch.Tensor, lengths: torch.Tensor) -> ModelOutput:
        """``images`` (B, 3, H, W) in [0, 1]; ``tokens`` (B, L); ``lengths`` (B,)."""
        f_text = self.text_encoder(tokens, lengths).f_text
        pyramid = self.backbone(images)
        cross = self.fusion(pyramid, f_text)
        prior = self.localizer(cross.f_m3, f_text)
        mask = self.segmenter(cross.f_m3, prior)
        return ModelOutput(prior=prior, mask=mask, cross=cross, f_text=f_text)
