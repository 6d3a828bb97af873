"""Polygon rasterization and uncompressed COCO-style RLE."""

import numpy as np

from lts.errors import DataError


def _on_segment(px, py, x0, y0, x1, y1):
    cross = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
    within = (
        (np.minimum(x0, x1) <= px) & (px <= np.maximum(x0, x1))
        & (np.minimum(y0, y1) <= py) & (py <= np.maximum(y0, y1))
    )
    return (cross == 0) & within


def rasterize_polygons(polygons, height: int, width: int) -> np.ndarray:
    """Even-odd fill sampled at integer pixel coordinates, boundary inclusive.

    ``polygons`` is a list of rings, each a list of ``[x, y]`` vertices.
    Crossings are counted over all rings together, so inner rings cut holes.
    """
    if not polygons:
        raise DataError("polygon list is empty")
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    inside = np.zeros((height, width), dtype=bool)
    boundary = np.zeros((height, width), dtype=bool)
    for ring in polygons:
        pts = np.asarray(ring, dtype=np.float64).reshape(-1, 2)
        if len(pts) < 3:
            raise DataError(f"polygon ring needs at least 3 vertices, got {len(pts)}")
        for (x0, y0), (x1, y1) in zip(pts, np.roll(pts, -1, axis=0)):
            boundary |= _on_segment(xs, ys, x0, y0, x1, y1)
            if y0 == y1:
                continue
            # half-open rule on y so shared vertices are counted once
            straddles = (y0 > ys) != (y1 > ys)
            x_cross = x0 + (ys - y0) * (x1 - x0) / (y1 - y0)
            inside ^= straddles & (xs < x_cross)
    return (inside | boundary).astype(np.uint8)


def rle_encode(mask: np.ndarray) -> dict:
    """Run lengths over the column-major flattening, starting with background."""
    flat = np.asarray(mask, dtype=np.uint8).flatten(order="F")
    if flat.size and not np.isin(flat, (0, 1)).all():
        raise DataError("mask must be binary")
    change = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    counts = np.diff(bounds).tolist()
    if flat.size and flat[0] == 1:
        counts = [0] + counts
    return {"size": [int(mask.shape[0]), int(mask.shape[1])], "counts": [int(c) for c in counts]}


def rle_decode(rle, height: int | None = None, width: int | None = None) -> np.ndarray:
    if isinstance(rle, dict):
        height, width = rle.get("size", (height, width))
        counts = rle["counts"]
    else:
        counts = rle
    if height is None or width is None:
        raise DataError("RLE without a size needs explicit height and width")
    counts = np.asarray(counts, dtype=np.int64)
    if (counts < 0).any() or counts.sum() != height * width:
        raise DataError(f"RLE counts sum to {counts.sum()}, expected {height * width}")
    values = np.arange(len(counts)) % 2
    flat = np.repeat(values.astype(np.uint8), counts)
    return flat.reshape((height, width), order="F")


def decode_mask(spec: dict, height: int, width: int) -> np.ndarray:
    kind = spec.get("type")
    if kind == "polygon":
        return rasterize_polygons(spec.get("data") or [], height, width)
    if kind == "rle":
        mask = rle_decode(spec.get("data"), height, width)
        if mask.shape != (height, width):
            raise DataError(f"RLE size {mask.shape} does not match {height}x{width}")
        return mask
    raise DataError(f"unknown mask type {kind!r}")
