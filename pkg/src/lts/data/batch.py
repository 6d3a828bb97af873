import numpy as np
import torch

from lts.data.vocab import tokenize


def collate(samples, vocab, max_len):
    """Stack samples into (images NCHW, tokens, lengths, masks) tensors."""
    images = torch.from_numpy(np.stack([s.image for s in samples])).permute(0, 3, 1, 2).contiguous()
    seqs = [s.tokens if s.tokens is not None else tokenize(s.expression, vocab, max_len) for s in samples]
    tokens = torch.tensor([q.indices for q in seqs], dtype=torch.long)
    lengths = torch.tensor([q.length for q in seqs], dtype=torch.long)
    masks = torch.from_numpy(np.stack([s.gt_mask for s in samples])).float()
    return images, tokens, lengths, masks
