"""
hdfactors.scene.core
~~~~~~~~~~~~~~~~~~~~

This module implements the core functions of the scene sub-package: a
deterministic rasterizer for 2D sprites (square, ellipse, heart) and an
exact template-matching classifier that inverts it.
"""

from dataclasses import dataclass, field
import functools
import itertools
import logging
from typing import Dict, List, Sequence, Tuple

import numpy as np

from hdfactors.core.composer import SymbolicObject
from hdfactors.core.memory import FactorSchema
from hdfactors.exceptions import AuditError, DimensionMismatchError, InvalidObjectError


logger = logging.getLogger(__name__)

FACTORS = ("shape", "scale", "orientation", "posX", "posY")

# Order of rotations that map a shape onto itself.
SYMMETRY = {"square": 4, "ellipse": 2, "heart": 1}

MAX_TEMPLATES = 100_000

Image = np.ndarray


def _square_radius(area: float) -> float:
    return np.sqrt(area) / np.sqrt(2.0)


def _ellipse_radius(area: float) -> float:
    # Semi-axes 2b and b: area = 2 * pi * b^2.
    return 2.0 * np.sqrt(area / (2.0 * np.pi))


def _heart_radius(area: float) -> float:
    # Two half-discs of radius r on a triangle of base 4r and height 2r.
    return 2.0 * np.sqrt(area / (np.pi + 4.0))


CIRCUMRADIUS = {
    "square": _square_radius,
    "ellipse": _ellipse_radius,
    "heart": _heart_radius,
}


@dataclass(frozen=True)
class RenderConfig:
    """Frame size, factor schema and geometry of the renderer.

    Scale indices map linearly to silhouette areas between ``min_area`` and
    ``max_area`` (fractions of the frame); orientation index ``j`` of ``K``
    is the angle ``2 pi j / K``; positions are spread evenly over the centers
    that keep the largest silhouette inside the frame.

    Args:
        schema: Factors named shape, scale, orientation, posX, posY.
        width: Frame width in pixels.
        height: Frame height in pixels.
        shapes: Shape names by shape index.
        min_area: Silhouette area of the smallest scale.
        max_area: Silhouette area of the largest scale.
    """

    schema: FactorSchema = field(default_factory=FactorSchema.metric)
    width: int = 64
    height: int = 64
    shapes: Tuple[str, ...] = ("square", "ellipse", "heart")
    min_area: float = 0.04
    max_area: float = 0.25

    def __post_init__(self):
        if tuple(self.schema.names) != FACTORS:
            raise ValueError(
                "Renderer needs the factors {}, got {}".format(
                    FACTORS, self.schema.names
                )
            )
        unknown = set(self.shapes) - set(SYMMETRY)
        if unknown:
            raise ValueError("Unknown shapes: {}".format(sorted(unknown)))
        if self.schema.cardinalities[0] > len(self.shapes):
            raise ValueError(
                "Schema has {} shapes, renderer knows {}".format(
                    self.schema.cardinalities[0], len(self.shapes)
                )
            )
        if not 0 < self.min_area <= self.max_area < 1:
            raise ValueError("Areas must satisfy 0 < min_area <= max_area < 1")
        if 2 * self.margin > min(self.width, self.height):
            raise ValueError("Silhouettes of this size do not fit the frame")

    @property
    def areas(self) -> np.ndarray:
        """Silhouette area in pixels by scale index."""
        count = self.schema.cardinalities[1]
        fractions = np.linspace(self.min_area, self.max_area, count)
        return fractions * self.width * self.height

    @property
    def angles(self) -> np.ndarray:
        count = self.schema.cardinalities[2]
        return 2.0 * np.pi * np.arange(count) / count

    @property
    def margin(self) -> float:
        area = self.max_area * self.width * self.height
        return max(
            CIRCUMRADIUS[name](area)
            for name in self.shapes[: self.schema.cardinalities[0]]
        )

    def _positions(self, count: int, extent: int) -> np.ndarray:
        if count == 1:
            return np.array([extent / 2.0])
        return np.linspace(self.margin, extent - self.margin, count)

    @property
    def positions_x(self) -> np.ndarray:
        return self._positions(self.schema.cardinalities[3], self.width)

    @property
    def positions_y(self) -> np.ndarray:
        return self._positions(self.schema.cardinalities[4], self.height)

    def geometry(self) -> Dict[str, List]:
        """The index-to-geometry tables."""
        return {
            "shape": list(self.shapes[: self.schema.cardinalities[0]]),
            "area": self.areas.tolist(),
            "angle": self.angles.tolist(),
            "x": self.positions_x.tolist(),
            "y": self.positions_y.tolist(),
        }

    def to_dict(self) -> Dict:
        return {
            "schema": self.schema.to_list(),
            "width": self.width,
            "height": self.height,
            "shapes": list(self.shapes),
            "min_area": self.min_area,
            "max_area": self.max_area,
        }


def _fold(values: Sequence[int], cfg: RenderConfig) -> int:
    """Orientation index times the symmetry order, modulo the cardinality."""
    fold = SYMMETRY[cfg.shapes[values[0]]]
    return (values[2] * fold) % cfg.schema.cardinalities[2]


def canonical_orientation(shape: int, orientation: int, cfg: RenderConfig) -> int:
    """The smallest orientation index rendering identically to ``orientation``."""
    count = cfg.schema.cardinalities[2]
    fold = SYMMETRY[cfg.shapes[shape]]
    target = (orientation * fold) % count
    return next(j for j in range(count) if (j * fold) % count == target)


def canonicalize(obj: SymbolicObject, cfg: RenderConfig) -> SymbolicObject:
    """Replace the orientation by its smallest symmetry-equivalent index."""
    values = cfg.schema.validate(obj.values)
    return obj.replace(2, canonical_orientation(values[0], values[2], cfg))


def _inside(name: str, u: np.ndarray, v: np.ndarray, area: float) -> np.ndarray:
    """Membership of shape-local coordinates (v points down the frame)."""
    if name == "square":
        half = np.sqrt(area) / 2.0
        return (np.abs(u) <= half) & (np.abs(v) <= half)
    if name == "ellipse":
        b = np.sqrt(area / (2.0 * np.pi))
        return (u / (2.0 * b)) ** 2 + (v / b) ** 2 <= 1.0
    r = np.sqrt(area / (np.pi + 4.0))
    left = (u + r) ** 2 + v ** 2 <= r * r
    right = (u - r) ** 2 + v ** 2 <= r * r
    lobes = (v <= 0) & (left | right)
    point = (v >= 0) & (np.abs(u) <= 2.0 * r - v)
    return lobes | point


def _silhouette(
    name: str,
    area: float,
    angle: float,
    cx: np.ndarray,
    cy: np.ndarray,
    width: int,
    height: int,
) -> np.ndarray:
    """Binary masks for one shape at every (cx, cy); shape (len(cx), len(cy), H, W)."""
    ys = np.arange(height) + 0.5
    xs = np.arange(width) + 0.5
    dx = xs[None, None, None, :] - np.asarray(cx)[:, None, None, None]
    dy = ys[None, None, :, None] - np.asarray(cy)[None, :, None, None]
    cos, sin = np.cos(angle), np.sin(angle)
    u = cos * dx + sin * dy
    v = -sin * dx + cos * dy
    return _inside(name, u, v, area)


def _effective_angle(values: Sequence[int], cfg: RenderConfig) -> float:
    count = cfg.schema.cardinalities[2]
    fold = SYMMETRY[cfg.shapes[values[0]]]
    return 2.0 * np.pi * _fold(values, cfg) / (count * fold)


def render(obj: SymbolicObject, cfg: RenderConfig) -> Image:
    """Render an object as a binary silhouette with values in {0, 1}.

    Pixels are covered when their center lies inside the rotated shape. The
    rotation is reduced modulo the shape's symmetry, so symmetry-equivalent
    orientations give identical images.
    """
    values = cfg.schema.validate(obj.values)
    mask = _silhouette(
        cfg.shapes[values[0]],
        cfg.areas[values[1]],
        _effective_angle(values, cfg),
        cfg.positions_x[values[3] : values[3] + 1],
        cfg.positions_y[values[4] : values[4] + 1],
        cfg.width,
        cfg.height,
    )
    return mask[0, 0].astype(float)


def _check_image(img: Image, cfg: RenderConfig) -> None:
    if np.shape(img) != (cfg.height, cfg.width):
        raise DimensionMismatchError(
            "Image has shape {}, expected {}".format(
                np.shape(img), (cfg.height, cfg.width)
            )
        )


def iou(a: Image, b: Image) -> float:
    """Intersection over union of two images binarized at 0.5.

    Two empty silhouettes have an IoU of 1.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionMismatchError(
            "Image shapes differ: {} != {}".format(a.shape, b.shape)
        )
    a = a >= 0.5
    b = b >= 0.5
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


class TemplateBank:
    """Renderings of every canonical object, in lexicographic order."""

    def __init__(self, cfg: RenderConfig) -> None:
        schema = cfg.schema
        ranges = [range(card) for card in schema.cardinalities]
        objects = [
            values
            for values in itertools.product(*ranges)
            if values[2] == canonical_orientation(values[0], values[2], cfg)
        ]
        if len(objects) > MAX_TEMPLATES:
            raise InvalidObjectError(
                "Schema has {} canonical objects, exhaustive classification "
                "supports at most {}".format(len(objects), MAX_TEMPLATES)
            )
        pixels = cfg.width * cfg.height
        masks = {}
        for shape, scale, orientation in itertools.product(
            *(range(card) for card in schema.cardinalities[:3])
        ):
            if orientation != canonical_orientation(shape, orientation, cfg):
                continue
            values = (shape, scale, orientation)
            masks[values] = _silhouette(
                cfg.shapes[shape],
                cfg.areas[scale],
                _effective_angle(values, cfg),
                cfg.positions_x,
                cfg.positions_y,
                cfg.width,
                cfg.height,
            )
        self.objects = np.asarray(objects, dtype=int)
        self.masks = np.empty((len(objects), pixels), dtype=np.float32)
        for row, values in enumerate(objects):
            self.masks[row] = masks[values[:3]][values[3], values[4]].ravel()
        self.areas = self.masks.sum(axis=1).astype(float)
        self.masks.setflags(write=False)
        self.objects.setflags(write=False)
        logger.info("Built template bank: %d canonical objects", len(objects))

    def __len__(self) -> int:
        return len(self.objects)

    def scores(self, images: np.ndarray) -> np.ndarray:
        """IoU of every (image, template) pair; images as (B, pixels) arrays."""
        binary = (np.asarray(images) >= 0.5).astype(np.float32)
        inter = (binary @ self.masks.T).astype(float)
        union = self.areas[None, :] + binary.sum(axis=1, dtype=float)[:, None] - inter
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(union == 0, 1.0, inter / union)

    def audit(self) -> None:
        """Check that no two canonical objects render identically."""
        packed = np.packbits(self.masks.astype(bool), axis=1)
        distinct = {row.tobytes() for row in packed}
        if len(distinct) != len(self):
            raise AuditError(
                "Renderer is not injective: {} templates, {} distinct images".format(
                    len(self), len(distinct)
                )
            )


@functools.lru_cache(maxsize=8)
def templates(cfg: RenderConfig) -> TemplateBank:
    """The shared, read-only template bank of a render configuration."""
    return TemplateBank(cfg)


def classify_batch(
    images: np.ndarray, cfg: RenderConfig, chunk: int = 256
) -> np.ndarray:
    """Classify a (B, H, W) stack; returns a (B, N) array of value indices."""
    images = np.asarray(images)
    if images.ndim != 3 or images.shape[1:] != (cfg.height, cfg.width):
        raise DimensionMismatchError(
            "Expected images of shape (B, {}, {}), got {}".format(
                cfg.height, cfg.width, images.shape
            )
        )
    bank = templates(cfg)
    flat = images.reshape(len(images), -1)
    result = np.empty((len(images), len(cfg.schema)), dtype=int)
    for start in range(0, len(flat), chunk):
        best = np.argmax(bank.scores(flat[start : start + chunk]), axis=1)
        result[start : start + chunk] = bank.objects[best]
    return result


def classify(img: Image, cfg: RenderConfig) -> SymbolicObject:
    """The canonical object whose rendering has the highest IoU with ``img``.

    Ties go to the lexicographically smallest object.
    """
    _check_image(img, cfg)
    return SymbolicObject(tuple(classify_batch(np.asarray(img)[None], cfg)[0]))
