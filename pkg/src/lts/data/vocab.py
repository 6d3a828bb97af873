"""Vocabulary construction and tokenization."""

import re
from collections import Counter
from dataclasses import dataclass, field

from lts.errors import ConfigError, DataError

PAD = "<pad>"
UNK = "<unk>"

_PUNCT = re.compile(r"[^\w\s]")


def normalize(expression: str) -> list[str]:
    """Lowercase, drop punctuation, split on whitespace."""
    return _PUNCT.sub(" ", expression.lower()).split()


@dataclass
class Vocabulary:
    tokens: list[str]
    token_to_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if self.tokens[:2] != [PAD, UNK]:
            raise ConfigError("vocabulary must start with the padding and unknown tokens")
        if len(set(self.tokens)) != len(self.tokens):
            raise ConfigError("duplicate tokens in vocabulary")
        self.token_to_index = {tok: i for i, tok in enumerate(self.tokens)}

    pad_index = 0
    unk_index = 1

    def __len__(self):
        return len(self.tokens)

    def __getitem__(self, token: str) -> int:
        return self.token_to_index.get(token, self.unk_index)


@dataclass(frozen=True)
class TokenSequence:
    indices: tuple[int, ...]
    length: int

    def __post_init__(self):
        if not 1 <= self.length <= len(self.indices):
            raise DataError(f"true length {self.length} outside [1, {len(self.indices)}]")
        if any(i != Vocabulary.pad_index for i in self.indices[self.length:]):
            raise DataError("positions past the true length must hold padding")


def build_vocab(corpus, min_count: int = 1) -> Vocabulary:
    """Tokens ordered by frequency (descending), ties broken lexicographically."""
    corpus = list(corpus)
    if not corpus:
        raise ConfigError("cannot build a vocabulary from an empty corpus")
    counts = Counter(tok for text in corpus for tok in normalize(text))
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary([PAD, UNK] + kept)


def tokenize(expression: str, vocab: Vocabulary, max_len: int = 15) -> TokenSequence:
    words = normalize(expression)
    if not words:
        raise DataError(f"expression {expression!r} is empty after normalization")
    words = words[:max_len]
    indices = [vocab[w] for w in words]
    indices += [vocab.pad_index] * (max_len - len(indices))
    return TokenSequence(tuple(indices), len(words))
