"""Anchor priors by k-means over box shapes with a 1 - IoU distance."""

import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from honeyscope.detector.boxes import BoundingBox, centered_iou

logger = logging.getLogger(__name__)

MAX_ITERATIONS = 25


@dataclass
class KMeansResult:
    anchors: np.ndarray
    assignments: np.ndarray
    objective_history: List[float] = field(default_factory=list)


def _shapes(boxes, unit):
    if len(boxes) and isinstance(boxes[0], BoundingBox):
        wh = np.array([(b.w, b.h) for b in boxes], dtype=np.float64)
    else:
        wh = np.asarray(boxes, dtype=np.float64).reshape(-1, 2)
    return wh / unit


def _distance(wh, centroids):
    return 1.0 - centered_iou(wh, centroids)


def _seed_centroids(wh, k, rng):
    """k-means++ seeding under the 1 - IoU distance."""
    centroids = [wh[rng.integers(len(wh))]]
    for _ in range(1, k):
        nearest = _distance(wh, np.array(centroids)).min(axis=1)
        weights = nearest ** 2
        if weights.sum() <= 0:
            # every remaining shape coincides with a centroid
            weights = np.ones(len(wh))
        centroids.append(wh[rng.choice(len(wh), p=weights / weights.sum())])
    return np.array(centroids)


def kmeans_fit(boxes, k, seed=0, max_iterations=MAX_ITERATIONS, unit=1.0):
    """
    Cluster box shapes into k anchor priors.

    Args:
        boxes: BoundingBox list or (w, h) rows
        k: Number of priors
        seed: Seed for the k-means++ initialization
        max_iterations: Iteration cap; stops earlier once assignments are stable
        unit: Divides every extent, e.g. the cell size to get grid-cell units

    Returns:
        KMeansResult: priors sorted by area, final assignments and the per-iteration
        mean distance

    Raises:
        ValueError: If k is not positive or exceeds the number of distinct shapes
    """
    wh = _shapes(boxes, unit)
    if k <= 0:
        raise ValueError(f"Anchor count must be positive, got {k}")
    distinct = len(np.unique(wh, axis=0))
    if k > distinct:
        raise ValueError(f"Cannot fit {k} anchors to {distinct} distinct box shapes")
    if np.any(wh <= 0):
        raise ValueError("Box extents must be positive")

    rng = np.random.default_rng(seed)
    centroids = _seed_centroids(wh, k, rng)
    assignments = _distance(wh, centroids).argmin(axis=1)
    history = [float(_distance(wh, centroids)[np.arange(len(wh)), assignments].mean())]

    for iteration in range(max_iterations):
        # a cluster moves to its mean shape only when that lowers its own distance sum,
        # so the objective never increases
        for c in range(k):
            members = wh[assignments == c]
            if not len(members):
                continue
            candidate = members.mean(axis=0)
            if _distance(members, candidate[None])[:, 0].sum() < _distance(members, centroids[c:c + 1])[:, 0].sum():
                centroids[c] = candidate
        updated = _distance(wh, centroids).argmin(axis=1)
        history.append(float(_distance(wh, centroids)[np.arange(len(wh)), updated].mean()))
        stable = np.array_equal(updated, assignments)
        assignments = updated
        if stable:
            break
    logger.debug(f"k-means: {len(history) - 1} iterations, mean 1 - IoU {history[-1]:.4f}")

    order = np.argsort(centroids.prod(axis=1), kind='stable')
    remap = np.empty(k, dtype=np.int64)
    remap[order] = np.arange(k)
    return KMeansResult(centroids[order], remap[assignments], history)


def kmeans_anchors(boxes, k, seed=0, max_iterations=MAX_ITERATIONS, unit=1.0):
    """k anchor priors as a (k, 2) array of (w, h), smallest area first."""
    result = kmeans_fit(boxes, k, seed=seed, max_iterations=max_iterations, unit=unit)
    logger.info(f"Estimated {k} anchors from {len(result.assignments)} boxes "
                f"(mean 1 - IoU {result.objective_history[-1]:.4f})")
    return result.anchors
