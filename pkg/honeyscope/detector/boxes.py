"""
Boxes, detections, overlap and non-maximum suppression.

All boxes are center/extent in pixels of the image they were measured on.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from honeyscope.utils import atomic_write

logger = logging.getLogger(__name__)

CLASS_NAMES = ['round', 'triangular', 'spiky']


@dataclass(frozen=True)
class BoundingBox:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"Box extents must be positive, got w={self.w}, h={self.h}")

    @classmethod
    def from_corners(cls, x1, y1, x2, y2):
        return cls((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)

    @property
    def corners(self):
        return (self.cx - self.w / 2.0, self.cy - self.h / 2.0,
                self.cx + self.w / 2.0, self.cy + self.h / 2.0)

    @property
    def area(self):
        return self.w * self.h

    def scaled(self, sx, sy=None):
        sy = sx if sy is None else sy
        return BoundingBox(self.cx * sx, self.cy * sy, self.w * sx, self.h * sy)

    def inside(self, width, height):
        """True when the whole box lies within a width x height frame."""
        x1, y1, x2, y2 = self.corners
        return x1 >= 0 and y1 >= 0 and x2 <= width and y2 <= height


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    class_id: int
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"Confidence must be in [0, 1], got {self.confidence}")
        if not 0 <= self.class_id:
            raise ValueError(f"Class id must be non-negative, got {self.class_id}")


def iou(a, b):
    """Intersection over union of two boxes, in [0, 1]."""
    ax1, ay1, ax2, ay2 = a.corners
    bx1, by1, bx2, by2 = b.corners
    inter_w = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    inter_h = max(0.0, min(ay2, by2) - max(ay1, by1))
    intersection = inter_w * inter_h
    union = a.area + b.area - intersection
    if union <= 0:
        return 0.0
    return min(1.0, max(0.0, intersection / union))


def iou_matrix(boxes_a, boxes_b):
    """Pairwise IoU between two arrays of (cx, cy, w, h) rows."""
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    a1, a2 = a[:, None, :2] - a[:, None, 2:] / 2, a[:, None, :2] + a[:, None, 2:] / 2
    b1, b2 = b[None, :, :2] - b[None, :, 2:] / 2, b[None, :, :2] + b[None, :, 2:] / 2
    inter = np.clip(np.minimum(a2, b2) - np.maximum(a1, b1), 0, None).prod(axis=-1)
    union = a[:, None, 2:].prod(axis=-1) + b[None, :, 2:].prod(axis=-1) - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1), 0.0)


def paired_iou(boxes_a, boxes_b):
    """IoU of corresponding (cx, cy, w, h) rows of two equally shaped arrays."""
    a = np.asarray(boxes_a, dtype=np.float64)
    b = np.asarray(boxes_b, dtype=np.float64)
    a1, a2 = a[..., :2] - a[..., 2:] / 2, a[..., :2] + a[..., 2:] / 2
    b1, b2 = b[..., :2] - b[..., 2:] / 2, b[..., :2] + b[..., 2:] / 2
    inter = np.clip(np.minimum(a2, b2) - np.maximum(a1, b1), 0, None).prod(axis=-1)
    union = a[..., 2:].prod(axis=-1) + b[..., 2:].prod(axis=-1) - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1), 0.0)


def centered_iou(wh_a, wh_b):
    """IoU of boxes sharing a center, from (w, h) rows: shape (len(a), len(b))."""
    a = np.asarray(wh_a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(wh_b, dtype=np.float64).reshape(-1, 2)
    inter = np.minimum(a[:, None, 0], b[None, :, 0]) * np.minimum(a[:, None, 1], b[None, :, 1])
    union = a[:, None, 0] * a[:, None, 1] + b[None, :, 0] * b[None, :, 1] - inter
    return inter / union


def sort_by_confidence(detections):
    """Highest confidence first; equal confidences keep their input order."""
    return sorted(detections, key=lambda d: -d.confidence)


def nms(detections, iou_threshold=0.45):
    """
    Per-class greedy non-maximum suppression.

    A detection is dropped when its IoU with an already kept detection of the
    same class exceeds iou_threshold. Returns survivors sorted by confidence.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"NMS IoU threshold must be in (0, 1), got {iou_threshold}")
    ordered = sort_by_confidence(detections)
    if not ordered:
        return []
    rows = np.array([[d.box.cx, d.box.cy, d.box.w, d.box.h] for d in ordered])
    classes = np.array([d.class_id for d in ordered])
    overlaps = iou_matrix(rows, rows)
    suppressed = np.zeros(len(ordered), dtype=bool)
    kept = []
    for i in range(len(ordered)):
        if suppressed[i]:
            continue
        kept.append(ordered[i])
        suppressed |= (classes == classes[i]) & (overlaps[i] > iou_threshold)
    return kept


def format_detection(image_id, detection, class_names=CLASS_NAMES):
    box = detection.box
    return (f"{image_id} {class_names[detection.class_id]} "
            f"{box.cx:.6g} {box.cy:.6g} {box.w:.6g} {box.h:.6g} {detection.confidence:.6g}")


def save_detections(path, detections_by_image, class_names=CLASS_NAMES):
    """Write `image_id class_name cx cy w h confidence` lines, one per detection."""
    count = 0
    with atomic_write(path) as f:
        for image_id, detections in detections_by_image.items():
            for detection in sort_by_confidence(detections):
                f.write(format_detection(image_id, detection, class_names) + '\n')
                count += 1
    logger.info(f"Wrote {count} detections for {len(detections_by_image)} images to {path}")


def load_detections(path, class_names=CLASS_NAMES):
    """Read a detection record file into {image_id: [Detection, ...]} in file order."""
    detections = OrderedDict()
    with open(path, 'r') as f:
        for line_number, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 7:
                raise ValueError(f"{path}: line {line_number}: expected 7 fields, got {len(parts)}")
            image_id, class_name = parts[0], parts[1]
            if class_name not in class_names:
                raise ValueError(f"{path}: line {line_number}: unknown class '{class_name}'")
            try:
                cx, cy, w, h, confidence = (float(v) for v in parts[2:])
                detection = Detection(BoundingBox(cx, cy, w, h), class_names.index(class_name), confidence)
            except ValueError as e:
                raise ValueError(f"{path}: line {line_number}: {e}")
            detections.setdefault(image_id, []).append(detection)
    return detections
