"""Rendering of priors, masks and probability maps as PNG images."""

from pathlib import Path

import numpy as np
from PIL import Image

from lts.data.dataset import to_uint8_image
from lts.errors import DataError
from lts.evaluation import binarize

OVERLAY_COLOR = (255, 0, 255)


def prior_heatmap(prior, size) -> np.ndarray:
    """Grayscale heatmap of a stride-8 prior, nearest-upsampled to ``size`` (h, w).

    Values are min-max scaled and floored, so only cells holding the exact
    maximum reach 255 and the brightest pixels are those of the argmax cells.
    """
    prior = np.asarray(prior, dtype=np.float64)
    lo, hi = prior.min(), prior.max()
    scaled = (prior - lo) / (hi - lo) if hi > lo else np.ones_like(prior)
    gray = np.floor(scaled * 255).astype(np.uint8)
    h, w = size
    return np.asarray(Image.fromarray(gray).resize((w, h), Image.NEAREST))


def mask_overlay(image, mask) -> np.ndarray:
    """Source pixels where the mask is off, a solid overlay colour where it is on."""
    rgb = to_uint8_image(image) if np.asarray(image).dtype != np.uint8 else np.array(image)
    out = rgb.copy()
    out[np.asarray(mask, dtype=bool)] = OVERLAY_COLOR
    return out


def prob_map(prob) -> np.ndarray:
    return np.rint(np.clip(np.asarray(prob, dtype=np.float64), 0, 1) * 255).astype(np.uint8)


def save_prediction(out_dir, stem: str, image, prior, prob) -> dict:
    """Write ``{stem}_prior.png``, ``{stem}_mask.png`` and ``{stem}_prob.png``."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create {out_dir}: {exc}") from exc
    size = np.asarray(prob).shape
    paths = {
        "prior": out_dir / f"{stem}_prior.png",
        "mask": out_dir / f"{stem}_mask.png",
        "prob": out_dir / f"{stem}_prob.png",
    }
    Image.fromarray(prior_heatmap(prior, size)).save(paths["prior"])
    Image.fromarray(mask_overlay(image, binarize(prob))).save(paths["mask"])
    Image.fromarray(prob_map(prob)).save(paths["prob"])
    return paths
