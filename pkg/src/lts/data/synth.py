"""Synthetic coloured-shapes scenes with uniquely-referring expressions.

Expressions come from a small grammar::

    the [COLOR] (KIND | shape) [on the left | on the right | at the top | at the bottom]
    the [COLOR] (KIND | shape) (left of | right of | above | below) the [COLOR] (KIND | shape)

``referents`` interprets an expression against a scene, which lets the
generator (and the tests) check that every expression picks one shape.
"""

import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np

from lts.data.dataset import ImageSample, to_float_image
from lts.errors import ConfigError

log = logging.getLogger(__name__)

COLORS = {
    "red": (210, 40, 40),
    "green": (40, 170, 60),
    "blue": (45, 80, 215),
    "yellow": (225, 205, 40),
}
KINDS = ("circle", "square", "triangle")

EXTREMES = {
    "on the left": (0, -1),
    "on the right": (0, 1),
    "at the top": (1, -1),
    "at the bottom": (1, 1),
}
RELATIONS = {
    "left of": (0, -1),
    "right of": (0, 1),
    "above": (1, -1),
    "below": (1, 1),
}

# half-extent multipliers so the three kinds have comparable areas
_SQUARE_SCALE = 0.9
_TRIANGLE_SCALE = 1.3


@dataclass(frozen=True)
class Shape:
    kind: str
    color: str
    cx: float
    cy: float
    size: float

    @property
    def center(self):
        return (self.cx, self.cy)

    def bounding_radius(self) -> float:
        if self.kind == "circle":
            return self.size
        if self.kind == "square":
            return self.size * _SQUARE_SCALE * math.sqrt(2)
        return self.size * _TRIANGLE_SCALE

    def triangle_vertices(self):
        r = self.size * _TRIANGLE_SCALE
        dx = r * math.sqrt(3) / 2
        return [(self.cx, self.cy - r), (self.cx + dx, self.cy + r / 2), (self.cx - dx, self.cy + r / 2)]

    def area(self) -> float:
        if self.kind == "circle":
            return math.pi * self.size**2
        if self.kind == "square":
            return (2 * self.size * _SQUARE_SCALE) ** 2
        r = self.size * _TRIANGLE_SCALE
        return 3 * math.sqrt(3) / 4 * r**2

    def perimeter(self) -> float:
        if self.kind == "circle":
            return 2 * math.pi * self.size
        if self.kind == "square":
            return 8 * self.size * _SQUARE_SCALE
        return 3 * math.sqrt(3) * self.size * _TRIANGLE_SCALE

    def raster(self, height: int, width: int) -> np.ndarray:
        """Pixel (x, y) is inside when its centre (x + 0.5, y + 0.5) is."""
        ys, xs = np.mgrid[0:height, 0:width]
        px, py = xs + 0.5, ys + 0.5
        if self.kind == "circle":
            inside = (px - self.cx) ** 2 + (py - self.cy) ** 2 <= self.size**2
        elif self.kind == "square":
            half = self.size * _SQUARE_SCALE
            inside = (np.abs(px - self.cx) <= half) & (np.abs(py - self.cy) <= half)
        else:
            inside = np.ones((height, width), dtype=bool)
            verts = self.triangle_vertices()
            for (x0, y0), (x1, y1) in zip(verts, verts[1:] + verts[:1]):
                # vertices run clockwise in image coordinates
                inside &= (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0) >= 0
        return inside.astype(np.uint8)


@dataclass
class SynthConfig:
    n: int = 100
    image_size: int = 416
    min_shapes: int = 2
    max_shapes: int = 6
    kinds: tuple[str, ...] = KINDS
    colors: tuple[str, ...] = tuple(COLORS)
    # shape half-extent as a fraction of the image side
    size_range: tuple[float, float] = (0.07, 0.13)
    # share of scenes that contain a same-colour same-kind distractor
    spatial_prob: float = 0.3
    relation_prob: float = 0.3
    noise: float = 6.0
    seed: int = 0
    # index of the first sample; disjoint ranges give disjoint splits
    start_index: int = 0
    max_retries: int = 50
    # minimum separation, as a fraction of image side, for spatial words
    margin: float = 0.06
    templates: tuple[str, ...] = field(default=("kind", "color", "color_kind", "extreme", "relation"))

    def validate(self):
        if self.n < 0:
            raise ConfigError("n must be non-negative")
        if self.image_size <= 0 or self.image_size % 32:
            raise ConfigError(f"image_size {self.image_size} is not a positive multiple of 32")
        if not 1 <= self.min_shapes <= self.max_shapes:
            raise ConfigError("need 1 <= min_shapes <= max_shapes")
        unknown = set(self.kinds) - set(KINDS) | set(self.colors) - set(COLORS)
        if unknown:
            raise ConfigError(f"unknown shape attributes {sorted(unknown)}")
        lo, hi = self.size_range
        if not 0 < lo <= hi < 0.5:
            raise ConfigError("size_range must satisfy 0 < lo <= hi < 0.5")


# ---------------------------------------------------------------- grammar

_DESC = r"the (?:(?P<{p}color>{colors}) )?(?P<{p}kind>{kinds}|shape)"
_COLOR_RE = "|".join(COLORS)
_KIND_RE = "|".join(KINDS)
_EXPR = re.compile(
    "^"
    + _DESC.format(p="", colors=_COLOR_RE, kinds=_KIND_RE)
    + "(?: (?P<extreme>" + "|".join(EXTREMES) + "))?"
    + "(?: (?P<relation>" + "|".join(RELATIONS) + ") "
    + _DESC.format(p="a_", colors=_COLOR_RE, kinds=_KIND_RE)
    + ")?$"
)


def describe(color: str | None, kind: str | None) -> str:
    return "the " + " ".join(w for w in (color, kind or "shape") if w)


def _matches(shapes, color, kind):
    return [
        i for i, s in enumerate(shapes)
        if (color is None or s.color == color) and (kind in (None, "shape") or s.kind == kind)
    ]


def referents(expression: str, shapes) -> list[int]:
    """Indices of the shapes an expression can refer to (exact semantics)."""
    m = _EXPR.match(expression)
    if m is None:
        raise ValueError(f"expression {expression!r} is outside the grammar")
    found = _matches(shapes, m["color"], m["kind"])
    if m["extreme"]:
        axis, sign = EXTREMES[m["extreme"]]
        best = max(sign * shapes[i].center[axis] for i in found)
        found = [i for i in found if sign * shapes[i].center[axis] == best]
    if m["relation"]:
        anchors = _matches(shapes, m["a_color"], m["a_kind"])
        if len(anchors) != 1:
            return []
        a = anchors[0]
        axis, sign = RELATIONS[m["relation"]]
        ref = shapes[a].center[axis]
        found = [i for i in found if i != a and sign * (shapes[i].center[axis] - ref) > 0]
    return found


# --------------------------------------------------------------- generator

def _unique_descriptions(shapes, index, allowed):
    s = shapes[index]
    out = []
    if "kind" in allowed and _matches(shapes, None, s.kind) == [index]:
        out.append((None, s.kind))
    if "color" in allowed and _matches(shapes, s.color, None) == [index]:
        out.append((s.color, None))
    if "color_kind" in allowed and _matches(shapes, s.color, s.kind) == [index]:
        out.append((s.color, s.kind))
    return out


def _spatial_expressions(shapes, index, margin, allowed):
    """Extreme and relational phrasings with clear geometric separation."""
    s = shapes[index]
    out = []
    bases = [(s.color, s.kind), (None, s.kind), (s.color, None)]
    for color, kind in bases:
        group = _matches(shapes, color, kind)
        if len(group) < 2:
            continue
        base = describe(color, kind)
        if "extreme" in allowed:
            for phrase, (axis, sign) in EXTREMES.items():
                others = [sign * shapes[i].center[axis] for i in group if i != index]
                if sign * s.center[axis] - max(others) >= margin:
                    out.append(f"{base} {phrase}")
        if "relation" not in allowed:
            continue
        for a, anchor in enumerate(shapes):
            if a == index or not _unique_descriptions(shapes, a, ("kind", "color", "color_kind")):
                continue
            anchor_desc = describe(*_unique_descriptions(shapes, a, ("kind", "color", "color_kind"))[0])
            for phrase, (axis, sign) in RELATIONS.items():
                offsets = {i: sign * (shapes[i].center[axis] - anchor.center[axis]) for i in group if i != a}
                if offsets.get(index, -1) < margin:
                    continue
                if all(off <= -margin for i, off in offsets.items() if i != index):
                    out.append(f"{base} {phrase} {anchor_desc}")
    return out


def _place_shapes(rng, cfg, n_shapes, forced=None):
    side = cfg.image_size
    shapes = []
    attempts = 0
    specs = []
    if forced is not None:
        specs += [forced, forced]
    while len(specs) < n_shapes:
        specs.append((str(rng.choice(cfg.colors)), str(rng.choice(cfg.kinds))))
    for color, kind in specs:
        for _ in range(200):
            attempts += 1
            size = rng.uniform(*cfg.size_range) * side
            probe = Shape(kind, color, 0.0, 0.0, size)
            r = probe.bounding_radius()
            cx, cy = rng.uniform(r + 2, side - r - 2, size=2)
            cand = Shape(kind, color, float(cx), float(cy), float(size))
            if all(math.dist(cand.center, o.center) > r + o.bounding_radius() + 4 for o in shapes):
                shapes.append(cand)
                break
    return shapes


def _render(rng, cfg, shapes):
    side = cfg.image_size
    background = rng.uniform(20, 90)
    canvas = np.full((side, side, 3), background, dtype=np.float64)
    masks = []
    for s in shapes:
        m = s.raster(side, side).astype(bool)
        tint = np.asarray(COLORS[s.color], dtype=np.float64) + rng.uniform(-20, 20, size=3)
        canvas[m] = tint
        masks.append(m.astype(np.uint8))
    canvas += rng.normal(0.0, cfg.noise, size=canvas.shape)
    return np.clip(np.rint(canvas), 0, 255).astype(np.uint8), masks


def generate_scene(cfg: SynthConfig, index: int):
    """Return ``(pixels, shapes, target, expression)`` or None after bounded retries."""
    rng = np.random.default_rng((cfg.seed, index))
    margin = cfg.margin * cfg.image_size
    for _ in range(cfg.max_retries):
        n_shapes = int(rng.integers(cfg.min_shapes, cfg.max_shapes + 1))
        spatial = n_shapes >= 2 and rng.random() < cfg.spatial_prob
        forced = (str(rng.choice(cfg.colors)), str(rng.choice(cfg.kinds))) if spatial else None
        shapes = _place_shapes(rng, cfg, n_shapes, forced)
        if len(shapes) < cfg.min_shapes:
            continue
        if spatial:
            target = int(rng.integers(2))
            exprs = _spatial_expressions(shapes, target, margin, cfg.templates)
            relational = [e for e in exprs if any(f" {r} " in e for r in RELATIONS)]
            pool = relational if relational and rng.random() < cfg.relation_prob else [
                e for e in exprs if e not in relational
            ] or relational
        else:
            target = int(rng.integers(len(shapes)))
            pool = [describe(c, k) for c, k in _unique_descriptions(shapes, target, cfg.templates)]
        if not pool:
            continue
        expression = str(pool[int(rng.integers(len(pool)))])
        pixels, masks = _render(rng, cfg, shapes)
        if not masks[target].any():
            continue
        return pixels, shapes, target, expression
    return None


def generate_synthetic(config: SynthConfig) -> list[ImageSample]:
    config.validate()
    samples = []
    for index in range(config.start_index, config.start_index + config.n):
        scene = generate_scene(config, index)
        if scene is None:
            log.warning("skipping synthetic sample %d: no unique expression after %d retries",
                        index, config.max_retries)
            continue
        pixels, shapes, target, expression = scene
        mask = shapes[target].raster(config.image_size, config.image_size)
        samples.append(ImageSample(to_float_image(pixels), expression, mask))
    return samples
