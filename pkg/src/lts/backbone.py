"""Residual ConvNet producing features at strides 8, 16 and 32.

Darknet conventions are kept (3x3 strided downsampling, 1x1/3x3 residual
bottlenecks, batch norm, Leaky ReLU with slope 0.1) at a configurable
width so the network stays trainable on a CPU.
"""

from dataclasses import dataclass

import torch
from torch import nn

from lts.errors import ConfigError, ShapeError


@dataclass
class BackboneConfig:
    # output widths at strides 8, 16, 32 (d3, d2, d1)
    widths: tuple[int, int, int] = (128, 256, 512)
    # widths of the stride-2 and stride-4 stem layers
    stem_widths: tuple[int, int] = (32, 64)
    blocks: tuple[int, int, int] = (1, 1, 1)
    stem_blocks: int = 1
    negative_slope: float = 0.1

    def validate(self):
        if len(self.widths) != 3 or len(self.blocks) != 3:
            raise ConfigError("backbone needs exactly three output stages")
        if min(self.widths) <= 0 or min(self.stem_widths) <= 0:
            raise ConfigError("backbone widths must be positive")
        if min(self.blocks) < 0 or self.stem_blocks < 0:
            raise ConfigError("block counts must be non-negative")


@dataclass
class FeaturePyramid:
    f_v1: torch.Tensor  # stride 32
    f_v2: torch.Tensor  # stride 16
    f_v3: torch.Tensor  # stride 8


def conv_bn(in_ch, out_ch, kernel_size=3, stride=1, slope=0.1):
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, kernel_size, stride=stride, padding=kernel_size // 2, bias=False),
        nn.BatchNorm2d(out_ch),
        nn.LeakyReLU(slope),
    )


class ResidualBlock(nn.Module):
    def __init__(self, channels, slope=0.1):
        super().__init__()
        hidden = max(channels // 2, 1)
        self.body = nn.Sequential(
            conv_bn(channels, hidden, 1, slope=slope),
            conv_bn(hidden, channels, 3, slope=slope),
        )

    def forward(self, x):
        return x + self.body(x)


def _stage(in_ch, out_ch, n_blocks, slope):
    layers = [conv_bn(in_ch, out_ch, 3, stride=2, slope=slope)]
    layers += [ResidualBlock(out_ch, slope) for _ in range(n_blocks)]
    return nn.Sequential(*layers)


class Backbone(nn.Module):
    def __init__(self, config: BackboneConfig | None = None):
        super().__init__()
        config = config or BackboneConfig()
        config.validate()
        self.config = config
        slope = config.negative_slope
        s0, s1 = config.stem_widths
        d3, d2, d1 = config.widths
        self.stem = nn.Sequential(
            conv_bn(3, s0, 3, stride=2, slope=slope),
            _stage(s0, s1, config.stem_blocks, slope),
        )
        self.stage3 = _stage(s1, d3, config.blocks[0], slope)
        self.stage2 = _stage(d3, d2, config.blocks[1], slope)
        self.stage1 = _stage(d2, d1, config.blocks[2], slope)

    @property
    def channels(self) -> tuple[int, int, int]:
        """Channel counts (d1, d2, d3) of the stride 32/16/8 maps."""
        d3, d2, d1 = self.config.widths
        return d1, d2, d3

    def forward(self, images: torch.Tensor) -> FeaturePyramid:
        """``images`` is (B, 3, H, W) with H and W multiples of 32."""
        if images.dim() != 4 or images.shape[1] != 3:
            raise ShapeError(f"expected (B, 3, H, W) images, got {tuple(images.shape)}")
        h, w = images.shape[-2:]
        if h % 32 or w % 32:
            raise ShapeError(f"image size {h}x{w} is not a multiple of 32")
        f_v3 = self.stage3(self.stem(images))
        f_v2 = self.stage2(f_v3)
        f_v1 = self.stage1(f_v2)
        return FeaturePyramid(f_v1=f_v1, f_v2=f_v2, f_v3=f_v3)


def extract_pyramid(backbone: Backbone, image: torch.Tensor) -> FeaturePyramid:
    """Single-image convenience wrapper taking an (H, W, 3) tensor."""
    if image.dim() != 3 or image.shape[-1] != 3:
        raise ShapeError(f"expected an (H, W, 3) image, got {tuple(image.shape)}")
    return backbone(image.permute(2, 0, 1).unsqueeze(0))
