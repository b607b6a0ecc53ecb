"""
Slide specification and object placement.

A layout fixes every object's kind, geometry and tight bounding box; pixels
are only produced by render.py, so sample-level experiments can work from
layouts alone.
"""

import logging
import math
from dataclasses import dataclass, field, asdict
from typing import List, Optional, Tuple

import numpy as np

from honeyscope.errors import ConfigError, PlacementError
from honeyscope.detector.boxes import CLASS_NAMES, BoundingBox, iou_matrix
from honeyscope.synth.annotations import Annotation

logger = logging.getLogger(__name__)

BUBBLE = 'bubble'
# polygon samples per rounded triangle corner
CORNER_SEGMENTS = 8


@dataclass
class SlideSpec:
    seed: int = 0
    extent: int = 1080
    class_counts: List[Tuple[int, int]] = field(default_factory=lambda: [(2, 6), (2, 6), (2, 6)])
    round_radius: Tuple[float, float] = (20.0, 60.0)
    triangle_radius: Tuple[float, float] = (25.0, 55.0)
    spiky_radius: Tuple[float, float] = (20.0, 45.0)
    spike_length: Tuple[float, float] = (10.0, 20.0)
    spike_count: Tuple[int, int] = (8, 16)
    bubble_count: Tuple[int, int] = (0, 3)
    bubble_radius: Tuple[float, float] = (15.0, 70.0)
    overlap_limit: float = 0.2
    blur_sigma: float = 1.2
    noise_amplitude: float = 6.0
    background: Tuple[int, int, int] = (238, 228, 204)
    tint_jitter: float = 8.0
    max_attempts: int = 1000

    def validate(self):
        if self.extent <= 0:
            raise ConfigError(f"Slide extent must be positive, got {self.extent}")
        if len(self.class_counts) != len(CLASS_NAMES):
            raise ConfigError(f"Need {len(CLASS_NAMES)} class count ranges, got {len(self.class_counts)}")
        ranges = {f'class_counts[{CLASS_NAMES[c]}]': r for c, r in enumerate(self.class_counts)}
        ranges.update(round_radius=self.round_radius, triangle_radius=self.triangle_radius,
                      spiky_radius=self.spiky_radius, spike_length=self.spike_length,
                      spike_count=self.spike_count, bubble_count=self.bubble_count,
                      bubble_radius=self.bubble_radius)
        for name, (low, high) in ranges.items():
            if low < 0 or high < low:
                raise ConfigError(f"Range {name} must satisfy 0 <= low <= high, got ({low}, {high})")
        if not 0.0 <= self.overlap_limit < 1.0:
            raise ConfigError(f"Overlap limit must be in [0, 1), got {self.overlap_limit}")
        if self.blur_sigma < 0 or self.noise_amplitude < 0 or self.tint_jitter < 0:
            raise ConfigError("Blur, noise and tint jitter must be non-negative")
        if self.max_attempts < 1:
            raise ConfigError(f"max_attempts must be >= 1, got {self.max_attempts}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if 'class_counts' in data:
            data['class_counts'] = [tuple(r) for r in data['class_counts']]
        for key in ('round_radius', 'triangle_radius', 'spiky_radius', 'spike_length', 'spike_count',
                    'bubble_count', 'bubble_radius', 'background'):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


@dataclass
class PlacedObject:
    """
    One rendered object. `kind` is a class name or 'bubble'; outline holds the
    polygon for triangles, (tip, base, base) triples for spikes.
    """
    kind: str
    cx: float
    cy: float
    radius: float
    rotation: float = 0.0
    spike_length: float = 0.0
    spike_count: int = 0
    outline: Optional[np.ndarray] = None

    @property
    def class_id(self):
        return CLASS_NAMES.index(self.kind) if self.kind in CLASS_NAMES else None

    @property
    def box(self):
        if self.kind == 'triangular':
            xs, ys = self.outline[:, 0], self.outline[:, 1]
            return BoundingBox.from_corners(xs.min(), ys.min(), xs.max(), ys.max())
        if self.kind == 'spiky':
            tips = self.outline[:, 0, :]
            x1 = min(self.cx - self.radius, tips[:, 0].min())
            y1 = min(self.cy - self.radius, tips[:, 1].min())
            x2 = max(self.cx + self.radius, tips[:, 0].max())
            y2 = max(self.cy + self.radius, tips[:, 1].max())
            return BoundingBox.from_corners(x1, y1, x2, y2)
        return BoundingBox(self.cx, self.cy, 2 * self.radius, 2 * self.radius)

    def shifted(self, dx, dy):
        outline = None if self.outline is None else self.outline + np.array([dx, dy])
        return PlacedObject(self.kind, self.cx + dx, self.cy + dy, self.radius, self.rotation,
                            self.spike_length, self.spike_count, outline)


def rounded_triangle(cx, cy, radius, rotation):
    """Polygon of an equilateral triangle with circumradius `radius` and rounded corners."""
    corner = 0.25 * radius
    core = radius - corner
    points = []
    for k in range(3):
        theta = rotation + k * 2 * math.pi / 3
        vx, vy = cx + core * math.cos(theta), cy + core * math.sin(theta)
        for phi in np.linspace(theta - math.pi / 3, theta + math.pi / 3, CORNER_SEGMENTS + 1):
            points.append((vx + corner * math.cos(phi), vy + corner * math.sin(phi)))
    return np.array(points)


def spikes(cx, cy, radius, length, count, rotation):
    """count x 3 x 2 array: tip then the two base points of each radial spike."""
    half_width = 0.5 * math.pi / count
    out = np.empty((count, 3, 2))
    for k in range(count):
        phi = rotation + k * 2 * math.pi / count
        out[k, 0] = (cx + (radius + length) * math.cos(phi), cy + (radius + length) * math.sin(phi))
        out[k, 1] = (cx + radius * math.cos(phi - half_width), cy + radius * math.sin(phi - half_width))
        out[k, 2] = (cx + radius * math.cos(phi + half_width), cy + radius * math.sin(phi + half_width))
    return out


def make_object(kind, cx, cy, radius, rotation=0.0, spike_length=0.0, spike_count=0):
    outline = None
    if kind == 'triangular':
        outline = rounded_triangle(cx, cy, radius, rotation)
    elif kind == 'spiky':
        outline = spikes(cx, cy, radius, spike_length, spike_count, rotation)
    return PlacedObject(kind, cx, cy, radius, rotation, spike_length, spike_count, outline)


def _draw_object(kind, spec, rng):
    """Random geometry centered at the origin."""
    rotation = float(rng.uniform(0, 2 * math.pi))
    if kind == 'round':
        return make_object(kind, 0.0, 0.0, float(rng.uniform(*spec.round_radius)))
    if kind == 'triangular':
        return make_object(kind, 0.0, 0.0, float(rng.uniform(*spec.triangle_radius)), rotation)
    if kind == 'spiky':
        return make_object(kind, 0.0, 0.0, float(rng.uniform(*spec.spiky_radius)), rotation,
                           spike_length=float(rng.uniform(*spec.spike_length)),
                           spike_count=int(rng.integers(spec.spike_count[0], spec.spike_count[1] + 1)))
    return make_object(BUBBLE, 0.0, 0.0, float(rng.uniform(*spec.bubble_radius)))


@dataclass
class SlideLayout:
    image_id: str
    extent: int
    objects: List[PlacedObject]
    background: Tuple[int, int, int]

    @property
    def annotation(self):
        labels = [(obj.box, obj.class_id) for obj in self.objects if obj.kind != BUBBLE]
        bubbles = [obj.box for obj in self.objects if obj.kind == BUBBLE]
        return Annotation(self.image_id, self.extent, self.extent, labels, bubbles)


def layout_slide(spec, rng=None, image_id='slide', counts=None):
    """
    Place a slide's objects by rejection sampling.

    Args:
        spec: SlideSpec
        rng: numpy Generator or integer seed; defaults to spec.seed
        image_id: Identifier carried into the annotation
        counts: Optional fixed per-class grain counts overriding spec.class_counts

    Returns:
        SlideLayout

    Raises:
        PlacementError: If an object cannot be placed within spec.max_attempts draws
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed if rng is None else rng)
    if counts is None:
        counts = [int(rng.integers(low, high + 1)) for low, high in spec.class_counts]
    kinds = [name for name, count in zip(CLASS_NAMES, counts) for _ in range(count)]
    kinds = [kinds[i] for i in rng.permutation(len(kinds))]
    kinds += [BUBBLE] * int(rng.integers(spec.bubble_count[0], spec.bubble_count[1] + 1))

    tint = rng.uniform(-spec.tint_jitter, spec.tint_jitter, size=3)
    background = tuple(int(np.clip(round(c + t), 0, 255)) for c, t in zip(spec.background, tint))

    placed = []
    boxes = np.empty((0, 4))
    extent = spec.extent
    for kind in kinds:
        for _ in range(spec.max_attempts):
            template = _draw_object(kind, spec, rng)
            x1, y1, x2, y2 = template.box.corners
            if x2 - x1 > extent or y2 - y1 > extent:
                continue
            candidate = template.shifted(float(rng.uniform(-x1, extent - x2)), float(rng.uniform(-y1, extent - y2)))
            box = candidate.box
            row = np.array([[box.cx, box.cy, box.w, box.h]])
            if len(boxes) and iou_matrix(row, boxes).max() > spec.overlap_limit:
                continue
            placed.append(candidate)
            boxes = np.vstack([boxes, row])
            break
        else:
            raise PlacementError(
                f"Could not place a '{kind}' object on '{image_id}' after {spec.max_attempts} attempts "
                f"({len(placed)} of {len(kinds)} placed); lower the object counts or sizes, or raise the overlap limit")
    logger.debug(f"Laid out {image_id}: {len(placed)} objects")
    return SlideLayout(image_id, extent, placed, background)
