import numpy as np
import pytest

from honeyscope.detector.network import DetectorConfig
from honeyscope.synth.slide import SlideSpec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    """A 64-pixel, 2-anchor detector at 1/32 width: a few hundred parameters per layer."""
    return DetectorConfig(num_anchors=2, anchors=[(1.0, 1.0), (1.5, 1.2)], input_extent=64, width_scale=1 / 32)


@pytest.fixture
def small_spec():
    """Small slides with few, small objects so datasets generate in milliseconds."""
    return SlideSpec(
        seed=7,
        extent=160,
        class_counts=[(1, 2), (1, 2), (1, 2)],
        round_radius=(6.0, 12.0),
        triangle_radius=(6.0, 12.0),
        spiky_radius=(5.0, 9.0),
        spike_length=(2.0, 4.0),
        spike_count=(8, 12),
        bubble_count=(0, 1),
        bubble_radius=(4.0, 10.0),
    )
