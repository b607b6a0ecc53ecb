"""
Raw grid -> detections.

Per cell (i, j) and anchor b, with cell size c = input extent / S:
    cx = (sigmoid(tx) + j) * c        w = anchor_w * exp(tw) * c
    cy = (sigmoid(ty) + i) * c        h = anchor_h * exp(th) * c
    confidence = sigmoid(to) * max softmax(class logits)
"""

import logging

import numpy as np
from scipy.special import expit, softmax

from honeyscope.errors import ShapeError
from honeyscope.tensor.autograd import Tensor
from honeyscope.detector.boxes import BoundingBox, Detection

logger = logging.getLogger(__name__)

# exp(tw) stays positive and finite for any logit
LOG_SCALE_LIMIT = 30.0


def _as_grid(raw):
    grid = raw.data if isinstance(raw, Tensor) else raw
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 4 or grid.shape[-1] < 6:
        raise ShapeError(f"Expected an S x S x B x (5 + C) grid, got shape {grid.shape}")
    return grid


def decode_boxes(raw, anchors, input_extent):
    """
    Box geometry of every anchor.

    Returns:
        np.ndarray: S x S x B x 4 of (cx, cy, w, h) in input pixels
    """
    grid = _as_grid(raw)
    rows, cols, num_anchors, _ = grid.shape
    anchors = np.asarray(anchors, dtype=np.float64).reshape(-1, 2)
    if len(anchors) != num_anchors:
        raise ShapeError(f"{len(anchors)} anchors for a grid with {num_anchors} anchors per cell")
    cell = input_extent / rows
    j = np.arange(cols, dtype=np.float64)[None, :, None]
    i = np.arange(rows, dtype=np.float64)[:, None, None]
    log_wh = np.clip(grid[..., 2:4], -LOG_SCALE_LIMIT, LOG_SCALE_LIMIT)

    boxes = np.empty(grid.shape[:3] + (4,))
    boxes[..., 0] = (expit(grid[..., 0]) + j) * cell
    boxes[..., 1] = (expit(grid[..., 1]) + i) * cell
    boxes[..., 2:4] = anchors * np.exp(log_wh) * cell
    return boxes


def class_scores(raw):
    """(class id, confidence) per anchor; equal probabilities resolve to the lowest class index."""
    grid = _as_grid(raw)
    probabilities = softmax(grid[..., 5:], axis=-1)
    class_ids = probabilities.argmax(axis=-1)
    confidence = expit(grid[..., 4]) * probabilities.max(axis=-1)
    return class_ids, np.clip(confidence, 0.0, 1.0)


def decode(raw, anchors, conf_threshold=0.5, input_extent=416):
    """
    Turn one image's raw grid into detections in input-image pixels.

    Args:
        raw: S x S x B x (5 + C) Tensor or array
        anchors: B (w, h) priors in grid-cell units
        conf_threshold: Keep detections with confidence >= this
        input_extent: Side of the network input in pixels

    Returns:
        list: Detection objects in row-major cell order, anchors in order
    """
    if not 0.0 <= conf_threshold <= 1.0:
        raise ValueError(f"Confidence threshold must be in [0, 1], got {conf_threshold}")
    boxes = decode_boxes(raw, anchors, input_extent)
    class_ids, confidence = class_scores(raw)
    keep = np.argwhere(confidence >= conf_threshold)

    detections = []
    for i, j, b in keep:
        cx, cy, w, h = boxes[i, j, b]
        detections.append(Detection(BoundingBox(float(cx), float(cy), float(w), float(h)),
                                    int(class_ids[i, j, b]), float(confidence[i, j, b])))
    logger.debug(f"Decoded {len(detections)} detections at threshold {conf_threshold}")
    return detections
