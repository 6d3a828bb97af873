"""Losses, ground-truth downsampling and the learning-rate schedule."""

from dataclasses import dataclass
from typing import NamedTuple

import torch

from lts.errors import ConfigError, ShapeError


@dataclass
class TrainConfig:
    lr: float = 1e-3
    lr_decay: float = 0.1
    lr_decay_epoch: int = 30
    epochs: int = 45
    batch_size: int = 18
    loc_weight: float = 0.1
    eps: float = 1e-7
    reduction: str = "mean"
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0
    num_threads: int = 1

    def validate(self):
        if self.loc_weight < 0:
            raise ConfigError("loc_weight (lambda) must be >= 0")
        if not 0 < self.eps < 0.5:
            raise ConfigError("eps must lie in (0, 0.5)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if not 0 < self.lr_decay_epoch < self.epochs:
            raise ConfigError("lr_decay_epoch must fall inside the run")
        if self.reduction not in ("mean", "sum"):
            raise ConfigError(f"unknown reduction {self.reduction!r}")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")


class LossTerms(NamedTuple):
    total: torch.Tensor
    seg: torch.Tensor
    loc: torch.Tensor


def downsample_gt(mask: torch.Tensor, factor: int) -> torch.Tensor:
    """Keep the top-left pixel of every ``factor`` x ``factor`` block."""
    h, w = mask.shape[-2:]
    if h % factor or w % factor:
        raise ShapeError(f"mask {h}x{w} is not divisible by {factor}")
    return mask[..., ::factor, ::factor]


def bce(prob: torch.Tensor, target: torch.Tensor, eps: float = 1e-7, reduction: str = "mean") -> torch.Tensor:
    if prob.shape != target.shape:
        raise ShapeError(f"prediction {tuple(prob.shape)} and target {tuple(target.shape)} differ")
    p = prob.clamp(eps, 1 - eps)
    target = target.to(p.dtype)
    loss = -(target * torch.log(p) + (1 - target) * torch.log1p(-p))
    return loss.mean() if reduction == "mean" else loss.sum()


def total_loss(mask_logits, prior_logits, gt_mask, config: TrainConfig) -> LossTerms:
    """Segmentation BCE at stride 4 plus weighted locating BCE at stride 8."""
    seg = bce(torch.sigmoid(mask_logits), downsample_gt(gt_mask, 4), config.eps, config.reduction)
    loc = bce(torch.sigmoid(prior_logits), downsample_gt(gt_mask, 8), config.eps, config.reduction)
    return LossTerms(seg + config.loc_weight * loc, seg, loc)


def lr_at(epoch: int, config: TrainConfig) -> float:
    if epoch < config.lr_decay_epoch:
        return config.lr
    return config.lr * config.lr_decay
