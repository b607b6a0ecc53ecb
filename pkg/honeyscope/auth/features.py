"""
Sample features for authentication: per-class grain counts over a sample's
frames and the mean number of grains per frame.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from honeyscope.detector.boxes import CLASS_NAMES

logger = logging.getLogger(__name__)

FEATURE_NAMES = [f'{name}_per_frame' for name in CLASS_NAMES] + ['density']


@dataclass(frozen=True)
class AuthFeatures:
    counts: Tuple[int, ...]
    frame_count: int

    def __post_init__(self):
        if self.frame_count < 1:
            raise ValueError(f"A sample needs at least one frame, got {self.frame_count}")
        if any(c < 0 for c in self.counts):
            raise ValueError(f"Counts must be non-negative, got {self.counts}")

    @property
    def total(self):
        return int(sum(self.counts))

    @property
    def density(self):
        """Mean grains per frame."""
        return self.total / self.frame_count

    def per_frame(self):
        return np.asarray(self.counts, dtype=np.float64) / self.frame_count

    def vector(self):
        """Model input: per-frame class counts followed by density."""
        return np.append(self.per_frame(), self.density)

    def to_dict(self):
        return {'counts': list(self.counts), 'frame_count': self.frame_count, 'density': self.density}

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(int(c) for c in data['counts']), int(data['frame_count']))


def extract_features(per_frame_detections, num_classes=len(CLASS_NAMES)):
    """
    Features from one sample's frames.

    Args:
        per_frame_detections: One Detection list per frame

    Raises:
        ValueError: If there are no frames
    """
    frames = list(per_frame_detections)
    if not frames:
        raise ValueError("Cannot extract features from zero frames")
    counts = [0] * num_classes
    for detections in frames:
        for detection in detections:
            counts[detection.class_id] += 1
    return AuthFeatures(tuple(counts), len(frames))


def features_from_annotations(annotations, num_classes=len(CLASS_NAMES)):
    """Ground-truth features: every labeled grain of every annotation counts once."""
    annotations = list(annotations)
    if not annotations:
        raise ValueError("Cannot extract features from zero frames")
    counts = np.zeros(num_classes, dtype=np.int64)
    for annotation in annotations:
        counts += annotation.class_counts(num_classes)
    return AuthFeatures(tuple(int(c) for c in counts), len(annotations))


def features_from_records(detections_by_image, frames=None, num_classes=len(CLASS_NAMES)):
    """
    Features from a detection record mapping.

    Frames default to the number of distinct image ids; pass `frames` when some
    frames produced no detections and so never appear in the record.
    """
    frame_lists = list(detections_by_image.values())
    if frames is not None:
        if frames < len(frame_lists):
            raise ValueError(f"{frames} frames given but the record holds {len(frame_lists)} images")
        frame_lists += [[] for _ in range(frames - len(frame_lists))]
    return extract_features(frame_lists, num_classes)
