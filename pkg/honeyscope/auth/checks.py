"""
Adulteration signals that work on grain counts alone: dilution from density,
mislabelling and blending from the class distribution.
"""

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

DILUTION_TOLERANCE = 0.3
BLEND_TOLERANCE = 0.15


@dataclass(frozen=True)
class DilutionResult:
    diluted: bool
    ratio: float

    def to_dict(self):
        return {'diluted': self.diluted, 'ratio': self.ratio}


@dataclass(frozen=True)
class BlendResult:
    blended: bool
    divergence: float

    def to_dict(self):
        return {'blended': self.blended, 'divergence': self.divergence}


def dilution_check(sample_density, reference_density, tolerance_fraction=DILUTION_TOLERANCE):
    """
    Flag a sample whose density falls below the reference by more than
    `tolerance_fraction`.

    Raises:
        ValueError: If the reference density is not positive or the tolerance is outside [0, 1)
    """
    if reference_density <= 0:
        raise ValueError(f"Reference density must be positive, got {reference_density}")
    if not 0.0 <= tolerance_fraction < 1.0:
        raise ValueError(f"Tolerance must be in [0, 1), got {tolerance_fraction}")
    ratio = float(sample_density) / float(reference_density)
    return DilutionResult(ratio < 1.0 - tolerance_fraction, ratio)


def _distribution(counts, name):
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 1 or np.any(counts < 0):
        raise ValueError(f"{name} must be a flat vector of non-negative counts, got {counts.tolist()}")
    total = counts.sum()
    if total <= 0:
        raise ValueError(f"{name} has zero total; no distribution to compare")
    return counts / total


def distribution_compare(counts_a, counts_b):
    """Total-variation distance between the class distributions of two count vectors."""
    p = _distribution(counts_a, 'counts_a')
    q = _distribution(counts_b, 'counts_b')
    if p.shape != q.shape:
        raise ValueError(f"Class count mismatch: {len(p)} vs {len(q)}")
    return float(min(0.5 * np.abs(p - q).sum(), 1.0))


def closest_profile(counts, profiles):
    """
    Botanical-origin check: the profile whose mixture is nearest to `counts`.

    Returns:
        tuple: (HoneyProfile, total-variation distance)
    """
    profiles = list(profiles)
    if not profiles:
        raise ValueError("No profiles to compare against")
    distances = [distribution_compare(counts, profile.mixture) for profile in profiles]
    best = int(np.argmin(distances))
    logger.debug("Profile distances: " + ', '.join(f"{p.label}={d:.3f}" for p, d in zip(profiles, distances)))
    return profiles[best], distances[best]


def blend_check(counts, reference_mixture, tolerance=BLEND_TOLERANCE):
    """Flag a sample whose class distribution strays from the declared mixture."""
    if not 0.0 <= tolerance <= 1.0:
        raise ValueError(f"Tolerance must be in [0, 1], got {tolerance}")
    divergence = distribution_compare(counts, reference_mixture)
    return BlendResult(divergence > tolerance, divergence)
