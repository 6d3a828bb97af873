"""Position prior from the fused map: sentence-kernel filtering or a decoder layer."""

from dataclasses import dataclass

import torch
from torch import nn

from lts.errors import ConfigError, ShapeError

MODES = ("filter", "transformer", "none")


@dataclass
class LocalizationConfig:
    mode: str = "filter"
    n_filters: int = 1
    kernel_dim: int = 1024
    tf_layers: int = 1
    tf_heads: int = 4
    tf_hidden: int = 1024
    positional_encoding: bool = True
    # append normalized row/column planes to F_m3 before the first filter projection
    coord_channels: bool = False

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown localization mode {self.mode!r}; expected one of {MODES}")
        if self.n_filters < 1:
            raise ConfigError("n_filters must be >= 1")
        if self.kernel_dim <= 0 or self.tf_hidden <= 0 or self.tf_layers < 1:
            raise ConfigError("localization dims must be positive")
        if self.tf_hidden % self.tf_heads:
            raise ConfigError(f"tf_heads={self.tf_heads} does not divide tf_hidden={self.tf_hidden}")
        if self.tf_hidden % 2:
            raise ConfigError("tf_hidden must be even for the positional encoding")


@dataclass
class PositionPrior:
    logits: torch.Tensor  # (B, h, w) at stride 8

    @property
    def prior(self) -> torch.Tensor:
        return torch.sigmoid(self.logits)


def relevance_filter(kernel: torch.Tensor, features: torch.Tensor) -> torch.Tensor:
    """1x1 convolution of each (B, C, h, w) map with its own C-vector kernel."""
    if kernel.shape[-1] != features.shape[1]:
        raise ShapeError(f"kernel has {kernel.shape[-1]} channels, features have {features.shape[1]}")
    return torch.einsum("bc,bchw->bhw", kernel, features)


def coordinate_planes(like: torch.Tensor) -> torch.Tensor:
    """(B, 2, h, w) planes holding row and column positions scaled to [-1, 1]."""
    b, _, h, w = like.shape
    rows = torch.linspace(-1, 1, h, dtype=like.dtype, device=like.device)
    cols = torch.linspace(-1, 1, w, dtype=like.dtype, device=like.device)
    grid = torch.stack(torch.meshgrid(rows, cols, indexing="ij"))
    return grid.expand(b, 2, h, w)


def positional_encoding(h: int, w: int, d: int) -> torch.Tensor:
    """Fixed 2-D sinusoidal table of shape (h * w, d), rows in row-major order.

    The first d/2 channels encode the row index, the rest the column index.
    Within each half, channel j uses frequency 10000^(-2*(j//2)/(d/2)),
    with sin on even j and cos on odd j.
    """
    if d <= 0 or d % 2:
        raise ConfigError(f"positional encoding dim must be positive and even, got {d}")
    half = d // 2
    j = torch.arange(half, dtype=torch.float64)
    freq = torch.pow(10000.0, -2.0 * torch.div(j, 2, rounding_mode="floor") / half)
    is_sin = (j % 2 == 0)

    def axis(n):
        angle = torch.arange(n, dtype=torch.float64)[:, None] * freq[None, :]
        return torch.where(is_sin, torch.sin(angle), torch.cos(angle))

    rows = axis(h)[:, None, :].expand(h, w, half)
    cols = axis(w)[None, :, :].expand(h, w, half)
    return torch.cat([rows, cols], dim=-1).reshape(h * w, d).float()


class DecoderLayer(nn.Module):
    """Post-norm decoder layer; positions are added to every attention input."""

    def __init__(self, dim, heads, ffn_dim):
        super().__init__()
        self.self_attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.cross_attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.ffn = nn.Sequential(nn.Linear(dim, ffn_dim), nn.ReLU(), nn.Linear(ffn_dim, dim))
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)
        self.norm3 = nn.LayerNorm(dim)

    def forward(self, x, memory, pos=None):
        q = x if pos is None else x + pos
        x = self.norm1(x + self.self_attn(q, q, x, need_weights=False)[0])
        q = x if pos is None else x + pos
        x = self.norm2(x + self.cross_attn(q, memory, memory, need_weights=False)[0])
        return self.norm3(x + self.ffn(x))


class TransformerLocator(nn.Module):
    def __init__(self, in_dim, text_dim, config: LocalizationConfig):
        super().__init__()
        self.config = config
        dim = config.tf_hidden
        self.input_proj = nn.Conv2d(in_dim, dim, 1)
        self.memory_proj = nn.Linear(text_dim, dim)
        self.layers = nn.ModuleList(
            DecoderLayer(dim, config.tf_heads, config.tf_hidden) for _ in range(config.tf_layers)
        )
        self.head = nn.Linear(dim, 1)

    def forward(self, f_m3, f_text, use_pos=None):
        use_pos = self.config.positional_encoding if use_pos is None else use_pos
        b, _, h, w = f_m3.shape
        seq = self.input_proj(f_m3).flatten(2).transpose(1, 2)  # (B, h*w, dim)
        memory = self.memory_proj(f_text)[:, None, :]
        pos = None
        if use_pos:
            pos = positional_encoding(h, w, seq.shape[-1]).to(seq)[None]
        for layer in self.layers:
            seq = layer(seq, memory, pos)
        return self.head(seq).reshape(b, h, w)


class FilterCascade(nn.Module):
    """``n`` rounds of sentence-kernel filtering.

    Round 1 projects the fused map to ``kernel_dim`` channels. Each later round
    concatenates the previous round's sigmoid prior to the previous round's
    projected features, projects back to ``kernel_dim`` and filters again
    with a kernel generated by its own linear map. With ``coords`` the first
    projection also sees two coordinate planes.
    """

    def __init__(self, in_dim, text_dim, kernel_dim, n_filters, coords=False):
        super().__init__()
        self.coords = coords
        self.projections = nn.ModuleList(
            [nn.Conv2d(in_dim + 2 * coords, kernel_dim, 1)]
            + [nn.Conv2d(kernel_dim + 1, kernel_dim, 1) for _ in range(n_filters - 1)]
        )
        self.kernel_maps = nn.ModuleList(nn.Linear(text_dim, kernel_dim) for _ in range(n_filters))

    def make_kernel(self, f_text, round_index=0):
        return self.kernel_maps[round_index](f_text)

    def project(self, f_m3):
        if self.coords:
            f_m3 = torch.cat([f_m3, coordinate_planes(f_m3)], dim=1)
        return self.projections[0](f_m3)

    def forward(self, f_m3, f_text):
        features = self.project(f_m3)
        logits = relevance_filter(self.make_kernel(f_text, 0), features)
        for r in range(1, len(self.projections)):
            features = self.projections[r](torch.cat([features, torch.sigmoid(logits)[:, None]], dim=1))
            logits = relevance_filter(self.make_kernel(f_text, r), features)
        return logits


class Localizer(nn.Module):
    def __init__(self, in_dim, text_dim, config: LocalizationConfig | None = None):
        super().__init__()
        config = config or LocalizationConfig()
        config.validate()
        self.config = config
        self.filters = None
        self.transformer = None
        if config.mode == "filter":
            self.filters = FilterCascade(in_dim, text_dim, config.kernel_dim, config.n_filters,
                                         coords=config.coord_channels)
        elif config.mode == "transformer":
            self.transformer = TransformerLocator(in_dim, text_dim, config)

    def forward(self, f_m3: torch.Tensor, f_text: torch.Tensor) -> PositionPrior:
        mode = self.config.mode
        if mode == "filter":
            logits = self.filters(f_m3, f_text)
        elif mode == "transformer":
            logits = self.transformer(f_m3, f_text)
        else:
            b, _, h, w = f_m3.shape
            logits = f_m3.new_zeros(b, h, w)
        return PositionPrior(logits=logits)

