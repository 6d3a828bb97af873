from collections import Counter

import pytest

from lts.data import SynthConfig, build_vocab, generate_synthetic, tokenize
from lts.data.vocab import PAD, UNK, TokenSequence
from lts.errors import ConfigError, DataError


def test_build_vocab_frequency_order():
    vocab = build_vocab(["a b", "a"], min_count=1)
    assert vocab.token_to_index == {PAD: 0, UNK: 1, "a": 2, "b": 3}


def test_build_vocab_ties_are_lexicographic():
    vocab = build_vocab(["zeta alpha", "mid"])
    assert vocab.tokens[2:] == ["alpha", "mid", "zeta"]


def test_build_vocab_min_count():
    vocab = build_vocab(["a a b"], min_count=2)
    assert vocab.tokens == [PAD, UNK, "a"]
    assert vocab["b"] == vocab.unk_index


def test_build_vocab_empty_corpus():
    with pytest.raises(ConfigError):
        build_vocab([])


def test_vocab_size_on_synthetic_corpus():
    corpus = [s.expression for s in generate_synthetic(SynthConfig(n=1000, image_size=64, seed=3,
                                                                   size_range=(0.08, 0.12)))]
    distinct = Counter()
    for text in corpus:
        distinct.update(text.split())
    vocab = build_vocab(corpus)
    assert len(vocab) == 2 + len(distinct)
    assert len(corpus) == 1000


def test_tokenize_pads():
    vocab = build_vocab(["the red circle"])
    seq = tokenize("the Red circle", vocab, max_len=5)
    assert seq.indices == (vocab["the"], vocab["red"], vocab["circle"], 0, 0)
    assert seq.length == 3


def test_tokenize_truncates_to_max_len():
    words = [f"w{i}" for i in range(20)]
    vocab = build_vocab([" ".join(words)])
    seq = tokenize(" ".join(words), vocab, max_len=15)
    assert seq.length == 15
    assert seq.indices == tuple(vocab[w] for w in words[:15])


def test_tokenize_strips_punctuation_and_maps_unknown():
    vocab = build_vocab(["the circle"])
    seq = tokenize("The, circle!  left", vocab, max_len=4)
    assert seq.indices == (vocab["the"], vocab["circle"], vocab.unk_index, 0)


@pytest.mark.parametrize("text", ["!!!", "   ", ""])
def test_tokenize_empty(text):
    with pytest.raises(DataError):
        tokenize(text, build_vocab(["a"]), max_len=3)


@pytest.mark.parametrize("max_len", [1, 3, 15, 20])
def test_token_sequence_length_is_stable(max_len):
    vocab = build_vocab(["a b c d e f g"])
    for text in ["a", "a b c", "a b c d e f g h i j k l m n o p q r s t u"]:
        assert len(tokenize(text, vocab, max_len).indices) == max_len


def test_token_sequence_rejects_bad_padding():
    with pytest.raises(DataError):
        TokenSequence((2, 3, 4), 2)
