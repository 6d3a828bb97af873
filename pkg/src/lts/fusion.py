"""Multiplicative text gating at stride 32, then two upsample-and-merge steps."""

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from lts.backbone import FeaturePyramid
from lts.errors import ConfigError, ShapeError


@dataclass
class FusionConfig:
    dim: int = 512
    negative_slope: float = 0.1
    enabled: bool = True

    def validate(self):
        if self.dim <= 0:
            raise ConfigError("fusion dim must be positive")


@dataclass
class CrossModalFeature:
    f_m1: torch.Tensor
    f_m2: torch.Tensor
    f_m3: torch.Tensor


def upsample2x(x: torch.Tensor) -> torch.Tensor:
    return F.interpolate(x, scale_factor=2, mode="nearest")


class FusionLevel(nn.Module):
    """Merge the upsampled previous fused map with one finer visual map."""

    def __init__(self, dim, visual_dim, slope):
        super().__init__()
        self.slope = slope
        self.proj_prev = nn.Conv2d(dim, dim, 1)
        self.proj_visual = nn.Conv2d(visual_dim, dim, 1)
        self.merge = nn.Conv2d(2 * dim, dim, 1)

    def forward(self, f_prev, f_visual):
        if f_visual.shape[-2:] != torch.Size([2 * s for s in f_prev.shape[-2:]]):
            raise ShapeError(
                f"visual map {tuple(f_visual.shape[-2:])} is not twice {tuple(f_prev.shape[-2:])}"
            )
        up = upsample2x(f_prev)
        merged = torch.cat(
            [
                F.leaky_relu(self.proj_prev(up), self.slope),
                F.leaky_relu(self.proj_visual(f_visual), self.slope),
            ],
            dim=1,
        )
        return self.merge(merged)


class Fusion(nn.Module):
    def __init__(self, visual_dims, text_dim, config: FusionConfig | None = None):
        """``visual_dims`` is (d1, d2, d3) for the stride 32/16/8 maps."""
        super().__init__()
        config = config or FusionConfig()
        config.validate()
        self.config = config
        d1, d2, d3 = visual_dims
        self.text_dim = text_dim
        self.proj_v1 = nn.Conv2d(d1, config.dim, 1)
        self.proj_text = nn.Linear(text_dim, config.dim)
        self.level2 = FusionLevel(config.dim, d2, config.negative_slope)
        self.level3 = FusionLevel(config.dim, d3, config.negative_slope)

    def fuse_base(self, f_v1: torch.Tensor, f_text: torch.Tensor) -> torch.Tensor:
        if f_text.shape[-1] != self.text_dim:
            raise ShapeError(f"text vector has {f_text.shape[-1]} dims, expected {self.text_dim}")
        slope = self.config.negative_slope
        visual = F.leaky_relu(self.proj_v1(f_v1), slope)
        text = F.leaky_relu(self.proj_text(f_text), slope)
        return visual * text[:, :, None, None]

    def forward(self, pyramid: FeaturePyramid, f_text: torch.Tensor) -> CrossModalFeature:
        if not self.config.enabled:
            f_text = torch.ones_like(f_text)
        f_m1 = self.fuse_base(pyramid.f_v1, f_text)
        f_m2 = self.level2(f_m1, pyramid.f_v2)
        f_m3 = self.level3(f_m2, pyramid.f_v3)
        return CrossModalFeature(f_m1=f_m1, f_m2=f_m2, f_m3=f_m3)
