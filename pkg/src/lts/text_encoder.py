"""Word embedding lookup, bidirectional GRU and masked mean pooling."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from lts.errors import DataError, ShapeError

EMBED_INIT_RANGE = 0.08


@dataclass
class TextConfig:
    embed_dim: int = 300
    hidden_dim: int = 1024
    num_layers: int = 1
    max_len: int = 15


@dataclass
class TextEncoding:
    hidden: torch.Tensor  # (B, max_len, 2 * hidden_dim), zero beyond each length
    f_text: torch.Tensor  # (B, 2 * hidden_dim)
    lengths: torch.Tensor  # (B,)


def masked_mean(hidden: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
    """Average the first ``lengths[b]`` rows of ``hidden[b]``."""
    if (lengths < 1).any():
        raise ShapeError("every sequence needs at least one token")
    steps = torch.arange(hidden.shape[1], device=hidden.device)
    mask = (steps[None, :] < lengths[:, None]).to(hidden.dtype)
    total = (hidden * mask[..., None]).sum(dim=1)
    return total / lengths.to(hidden.dtype)[:, None]


class TextEncoder(nn.Module):
    def __init__(self, vocab_size: int, config: TextConfig | None = None):
        super().__init__()
        config = config or TextConfig()
        self.config = config
        self.embedding = nn.Embedding(vocab_size, config.embed_dim, padding_idx=0)
        self.gru = nn.GRU(
            config.embed_dim,
            config.hidden_dim,
            num_layers=config.num_layers,
            batch_first=True,
            bidirectional=True,
        )
        with torch.no_grad():
            self.embedding.weight.uniform_(-EMBED_INIT_RANGE, EMBED_INIT_RANGE)
            self.embedding.weight[0].zero_()

    @property
    def output_dim(self) -> int:
        return 2 * self.config.hidden_dim

    def embed(self, tokens: torch.Tensor) -> torch.Tensor:
        if tokens.numel() and (tokens.min() < 0 or tokens.max() >= self.embedding.num_embeddings):
            raise ShapeError("token index outside the embedding table")
        return self.embedding(tokens)

    def bigru(self, embeddings: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        """Run both directions over the true length only.

        The backward direction starts at position ``m - 1`` from a zero state,
        and rows at or beyond ``m`` come back as zeros.
        """
        if (lengths < 1).any():
            raise ShapeError("bigru requires m >= 1")
        packed = pack_padded_sequence(
            embeddings, lengths.cpu(), batch_first=True, enforce_sorted=False
        )
        out, _ = self.gru(packed)
        hidden, _ = pad_packed_sequence(out, batch_first=True, total_length=embeddings.shape[1])
        return hidden

    def forward(self, tokens: torch.Tensor, lengths: torch.Tensor) -> TextEncoding:
        hidden = self.bigru(self.embed(tokens), lengths)
        return TextEncoding(hidden=hidden, f_text=masked_mean(hidden, lengths), lengths=lengths)


def load_embeddings(path, vocab, table: torch.Tensor) -> int:
    """Copy vectors from a ``token v1 ... vD`` text file into ``table`` in place.

    Returns the number of vocabulary rows that were filled. The padding row
    is never touched.
    """
    dim = table.shape[1]
    filled = 0
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip().split(" ")
            if len(parts) < 2:
                continue
            if len(parts) != dim + 1:
                raise DataError(f"line {lineno}: expected {dim} values, got {len(parts) - 1}")
            index = vocab.token_to_index.get(parts[0])
            if index is None or index == vocab.pad_index:
                continue
            vec = np.asarray(parts[1:], dtype=np.float32)
            with torch.no_grad():
                table[index] = torch.from_numpy(vec)
            filled += 1
    return filled
