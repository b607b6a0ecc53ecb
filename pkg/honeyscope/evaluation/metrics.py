"""
Detection-vs-ground-truth matching and the precision / sensitivity /
specificity / F1 metrics.

True negatives are counted over grid cells: per image, the S x S cells that
hold neither a ground-truth center nor a kept detection center.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
from joblib import Parallel, delayed

from honeyscope.detector.boxes import CLASS_NAMES, iou_matrix, sort_by_confidence

logger = logging.getLogger(__name__)

IOU_THRESHOLD = 0.5
GRID_EXTENT = 13
PR_THRESHOLDS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


@dataclass
class MatchCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError(f"Counts must be non-negative, got {self}")

    def __add__(self, other):
        return MatchCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    def to_dict(self):
        return {'tp': self.tp, 'fp': self.fp, 'fn': self.fn, 'tn': self.tn}


@dataclass
class MetricsReport:
    precision: float
    sensitivity: float
    specificity: float
    f1: float
    counts: MatchCounts
    undefined: List[str] = field(default_factory=list)
    per_class: Dict[str, 'MetricsReport'] = field(default_factory=dict)

    def to_dict(self):
        data = {
            'precision': self.precision,
            'sensitivity': self.sensitivity,
            'specificity': self.specificity,
            'f1': self.f1,
            'counts': self.counts.to_dict(),
            'undefined': list(self.undefined),
        }
        if self.per_class:
            data['per_class'] = {name: report.to_dict() for name, report in self.per_class.items()}
        return data


def _cells(boxes, grid_extent, width, height):
    """Grid cells (row, col) holding the centers of (cx, cy, ...) rows."""
    cells = set()
    for cx, cy in boxes:
        col = min(max(int(cx * grid_extent // width), 0), grid_extent - 1)
        row = min(max(int(cy * grid_extent // height), 0), grid_extent - 1)
        cells.add((row, col))
    return cells


def match_detections(detections, ground_truth, iou_threshold=IOU_THRESHOLD, grid_extent=GRID_EXTENT,
                     image_size=(1080, 1080)):
    """
    Greedy one-to-one matching of one image's detections.

    In confidence order, each detection takes the unmatched same-class ground
    truth it overlaps most, provided the IoU reaches `iou_threshold`.

    Args:
        detections: Detection list
        ground_truth: list of (BoundingBox, class_id)
        iou_threshold: Minimum IoU for a true positive
        grid_extent: S for the true-negative cell count
        image_size: (width, height) of the frame the boxes live in

    Returns:
        MatchCounts
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"Matching IoU threshold must be in (0, 1), got {iou_threshold}")
    ordered = sort_by_confidence(detections)
    width, height = image_size

    tp = fp = 0
    matched = np.zeros(len(ground_truth), dtype=bool)
    if ordered and ground_truth:
        overlaps = iou_matrix([[d.box.cx, d.box.cy, d.box.w, d.box.h] for d in ordered],
                              [[b.cx, b.cy, b.w, b.h] for b, _ in ground_truth])
        gt_classes = np.array([c for _, c in ground_truth])
    for k, detection in enumerate(ordered):
        if not ground_truth:
            fp += 1
            continue
        candidates = np.where((gt_classes == detection.class_id) & ~matched, overlaps[k], -1.0)
        best = int(np.argmax(candidates))
        if candidates[best] >= iou_threshold:
            matched[best] = True
            tp += 1
        else:
            fp += 1
    fn = int((~matched).sum())

    occupied = _cells([(b.cx, b.cy) for b, _ in ground_truth], grid_extent, width, height)
    occupied |= _cells([(d.box.cx, d.box.cy) for d in ordered], grid_extent, width, height)
    tn = grid_extent * grid_extent - len(occupied)
    return MatchCounts(tp, fp, fn, tn)


def _ratio(numerator, denominator, name, undefined):
    if denominator == 0:
        undefined.append(name)
        return 0.0
    return numerator / denominator


def compute_metrics(counts):
    """
    Metrics from match counts. Zero denominators give 0 and are listed in `undefined`.
    """
    undefined = []
    precision = _ratio(counts.tp, counts.tp + counts.fp, 'precision', undefined)
    sensitivity = _ratio(counts.tp, counts.tp + counts.fn, 'sensitivity', undefined)
    specificity = _ratio(counts.tn, counts.tn + counts.fp, 'specificity', undefined)
    f1 = _ratio(2 * precision * sensitivity, precision + sensitivity, 'f1', undefined)
    return MetricsReport(precision, sensitivity, specificity, f1, counts, undefined)


def _match_image(detections, annotation, iou_threshold, grid_extent, num_classes):
    size = (annotation.width, annotation.height)
    overall = match_detections(detections, annotation.labels, iou_threshold, grid_extent, size)
    per_class = []
    for class_id in range(num_classes):
        per_class.append(match_detections(
            [d for d in detections if d.class_id == class_id],
            [(b, c) for b, c in annotation.labels if c == class_id],
            iou_threshold, grid_extent, size))
    return overall, per_class


def evaluate(detections_by_image, annotations, iou_threshold=IOU_THRESHOLD, grid_extent=GRID_EXTENT,
             class_names=CLASS_NAMES, threads=1):
    """
    Micro-averaged metrics over a set of images, with a per-class breakdown.

    Args:
        detections_by_image: {image_id: [Detection, ...]}; missing images count as no detections
        annotations: Annotation list defining the evaluated images
        threads: joblib workers; the reduction runs in annotation order
    """
    results = Parallel(n_jobs=threads)(
        delayed(_match_image)(detections_by_image.get(a.image_id, []), a, iou_threshold, grid_extent,
                              len(class_names))
        for a in annotations)

    total = MatchCounts()
    class_totals = [MatchCounts() for _ in class_names]
    for overall, per_class in results:
        total = total + overall
        class_totals = [acc + counts for acc, counts in zip(class_totals, per_class)]
    report = compute_metrics(total)
    report.per_class = {name: compute_metrics(counts) for name, counts in zip(class_names, class_totals)}
    unknown = set(detections_by_image) - {a.image_id for a in annotations}
    if unknown:
        logger.warning(f"Ignoring detections for {len(unknown)} images without annotations")
    logger.info(f"Evaluated {len(annotations)} images: tp {total.tp}, fp {total.fp}, fn {total.fn}, tn {total.tn}")
    return report


def pr_table(detections_by_image, annotations, thresholds=PR_THRESHOLDS, iou_threshold=IOU_THRESHOLD,
             grid_extent=GRID_EXTENT, threads=1):
    """Metrics at fixed confidence thresholds: one row dict per threshold."""
    rows = []
    for threshold in thresholds:
        kept = {image_id: [d for d in detections if d.confidence >= threshold]
                for image_id, detections in detections_by_image.items()}
        report = evaluate(kept, annotations, iou_threshold, grid_extent, threads=threads)
        rows.append({'threshold': threshold, 'precision': report.precision, 'sensitivity': report.sensitivity,
                     'specificity': report.specificity, 'f1': report.f1, **report.counts.to_dict()})
    return rows
