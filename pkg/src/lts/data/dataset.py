"""ImageSample records, resizing and the JSONL interchange format."""

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from lts.data.masks import decode_mask, rle_encode
from lts.data.vocab import TokenSequence, Vocabulary, tokenize
from lts.errors import ConfigError, DataError

log = logging.getLogger(__name__)


def to_float_image(pixels: np.ndarray) -> np.ndarray:
    return pixels.astype(np.float32) / np.float32(255.0)


def to_uint8_image(image: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)


@dataclass
class ImageSample:
    image: np.ndarray  # (H, W, 3) float32 in [0, 1]
    expression: str
    gt_mask: np.ndarray  # (H, W) uint8 in {0, 1}
    tokens: TokenSequence | None = None

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[-1] != 3:
            raise DataError(f"image must be (H, W, 3), got {self.image.shape}")
        h, w = self.image.shape[:2]
        if self.gt_mask.shape != (h, w):
            raise DataError(f"mask shape {self.gt_mask.shape} does not match image {h}x{w}")
        if h % 32 or w % 32:
            raise DataError(f"image size {h}x{w} is not a multiple of 32")
        if not self.gt_mask.any():
            raise DataError("ground-truth mask is empty")
        if not np.isin(self.gt_mask, (0, 1)).all():
            raise DataError("ground-truth mask must be binary")

    @property
    def size(self) -> tuple[int, int]:
        return self.image.shape[0], self.image.shape[1]

    def with_tokens(self, vocab: Vocabulary, max_len: int) -> "ImageSample":
        return ImageSample(self.image, self.expression, self.gt_mask, tokenize(self.expression, vocab, max_len))


def _check_resolution(resolution: int):
    if resolution <= 0 or resolution % 32:
        raise ConfigError(f"resolution {resolution} is not a positive multiple of 32")


def resize_arrays(image: np.ndarray, mask: np.ndarray, resolution: int):
    """Bilinear image and nearest-neighbour mask resize to a square ``resolution``."""
    _check_resolution(resolution)
    if image.shape[:2] == (resolution, resolution):
        return image, mask
    img = torch.from_numpy(np.ascontiguousarray(image)).permute(2, 0, 1)[None]
    img = F.interpolate(img, size=(resolution, resolution), mode="bilinear", align_corners=False)
    msk = torch.from_numpy(mask.astype(np.float32))[None, None]
    msk = F.interpolate(msk, size=(resolution, resolution), mode="nearest")
    image = img[0].permute(1, 2, 0).clamp(0, 1).numpy().astype(np.float32)
    return image, msk[0, 0].numpy().astype(np.uint8)


def resize_sample(sample: ImageSample, resolution: int) -> ImageSample:
    image, mask = resize_arrays(sample.image, sample.gt_mask, resolution)
    if image is sample.image:
        return sample
    return ImageSample(image, sample.expression, mask, sample.tokens)


def read_image(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return to_float_image(np.asarray(im.convert("RGB")))
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc


def load_jsonl(path, resolution: int | None = None, vocab: Vocabulary | None = None, max_len: int = 15):
    """Read samples from a JSONL index; image paths resolve relative to the index."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"dataset index {path} does not exist")
    samples = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                samples.append(_parse_record(json.loads(line), path.parent, resolution, vocab, max_len))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from exc
            except (DataError, KeyError, TypeError, ValueError) as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    return samples


def _parse_record(record, root: Path, resolution, vocab, max_len) -> ImageSample:
    for key in ("image", "expression", "mask", "height", "width"):
        if key not in record:
            raise DataError(f"record is missing {key!r}")
    height, width = int(record["height"]), int(record["width"])
    image_path = root / record["image"]
    if not image_path.is_file():
        raise DataError(f"image file {image_path} not found")
    image = read_image(image_path)
    if image.shape[:2] != (height, width):
        raise DataError(f"image is {image.shape[0]}x{image.shape[1]}, record says {height}x{width}")
    mask = decode_mask(record["mask"], height, width)
    if not mask.any():
        raise DataError("decoded mask is empty")
    if resolution is not None:
        image, mask = resize_arrays(image, mask, resolution)
    tokens = tokenize(record["expression"], vocab, max_len) if vocab is not None else None
    return ImageSample(image, record["expression"], mask, tokens)


def write_jsonl(samples, out_dir, index_name: str = "data.jsonl", image_prefix: str = "") -> Path:
    """Write PNG images and an index with RLE masks; returns the index path."""
    out_dir = Path(out_dir)
    image_dir = out_dir / "images"
    try:
        image_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create {image_dir}: {exc}") from exc
    index = out_dir / index_name
    with index.open("w", encoding="utf-8") as fh:
        for i, sample in enumerate(samples):
            rel = f"images/{image_prefix}{i:06d}.png"
            Image.fromarray(to_uint8_image(sample.image)).save(out_dir / rel, optimize=False)
            h, w = sample.size
            record = {
                "image": rel,
                "expression": sample.expression,
                "mask": {"type": "rle", "data": rle_encode(sample.gt_mask)},
                "height": h,
                "width": w,
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    log.info("wrote %d samples to %s", len(samples), index)
    return index
