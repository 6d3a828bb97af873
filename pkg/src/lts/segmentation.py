"""ASPP refinement of the fused map plus prior, upsampled once by deconvolution."""

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from lts.errors import ConfigError, ShapeError
from lts.localization import PositionPrior


@dataclass
class ASPPConfig:
    rates: tuple[int, ...] = (1, 6, 12, 18)
    channels: int = 256
    image_pooling: bool = True
    enabled: bool = True

    def validate(self):
        if not self.rates or min(self.rates) <= 0:
            raise ConfigError("ASPP rates must be positive")
        if len(set(self.rates)) != len(self.rates):
            raise ConfigError(f"ASPP rates must be distinct, got {self.rates}")
        if self.channels <= 0:
            raise ConfigError("ASPP channels must be positive")


@dataclass
class MaskPrediction:
    logits: torch.Tensor  # (B, H/4, W/4)

    @property
    def prob(self) -> torch.Tensor:
        return torch.sigmoid(self.logits)


def _branch(in_ch, out_ch, kernel_size, dilation=1):
    padding = dilation * (kernel_size // 2)
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, kernel_size, padding=padding, dilation=dilation, bias=False),
        nn.BatchNorm2d(out_ch),
        nn.ReLU(inplace=True),
    )


class ASPP(nn.Module):
    def __init__(self, in_channels, config: ASPPConfig | None = None):
        super().__init__()
        config = config or ASPPConfig()
        config.validate()
        self.config = config
        out = config.channels
        self.point = _branch(in_channels, out, 1)
        self.dilated = nn.ModuleList(_branch(in_channels, out, 3, r) for r in config.rates)
        self.pool = None
        n_branches = 1 + len(config.rates)
        if config.image_pooling:
            self.pool = nn.Sequential(
                nn.AdaptiveAvgPool2d(1),
                nn.Conv2d(in_channels, out, 1, bias=False),
                nn.ReLU(inplace=True),
            )
            n_branches += 1
        self.project = _branch(n_branches * out, out, 1)

    def forward(self, x):
        outs = [self.point(x)] + [branch(x) for branch in self.dilated]
        if self.pool is not None:
            outs.append(self.pool(x).expand(-1, -1, *x.shape[-2:]))
        return self.project(torch.cat(outs, dim=1))


class SegmentationHead(nn.Module):
    def __init__(self, in_channels, config: ASPPConfig | None = None):
        super().__init__()
        config = config or ASPPConfig()
        self.config = config
        self.aspp = ASPP(in_channels + 1, config)
        self.deconv = nn.ConvTranspose2d(config.channels, config.channels, 2, stride=2)
        self.head = nn.Conv2d(config.channels, 1, 1)

    def forward(self, f_m3: torch.Tensor, prior: PositionPrior) -> MaskPrediction:
        if f_m3.shape[-2:] != prior.logits.shape[-2:]:
            raise ShapeError(
                f"fused map {tuple(f_m3.shape[-2:])} and prior {tuple(prior.logits.shape[-2:])} differ"
            )
        if not self.config.enabled:
            up = F.interpolate(prior.logits[:, None], scale_factor=2, mode="nearest")
            return MaskPrediction(logits=up[:, 0])
        x = torch.cat([f_m3, prior.prior[:, None]], dim=1)
        x = F.relu(self.deconv(self.aspp(x)))
        return MaskPrediction(logits=self.head(x)[:, 0])
