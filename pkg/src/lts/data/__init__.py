from lts.data.dataset import ImageSample, load_jsonl, resize_sample, write_jsonl
from lts.data.masks import rasterize_polygons, rle_decode, rle_encode
from lts.data.synth import SynthConfig, generate_synthetic, referents
from lts.data.vocab import TokenSequence, Vocabulary, build_vocab, tokenize

__all__ = [
    "ImageSample",
    "SynthConfig",
    "TokenSequence",
    "Vocabulary",
    "build_vocab",
    "generate_synthetic",
    "load_jsonl",
    "rasterize_polygons",
    "referents",
    "resize_sample",
    "rle_decode",
    "rle_encode",
    "tokenize",
    "write_jsonl",
]
