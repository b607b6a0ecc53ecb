import numpy as np
import pytest

from honeyscope.detector.anchors import kmeans_anchors, kmeans_fit
from honeyscope.detector.boxes import BoundingBox


def test_identical_boxes():
    boxes = [BoundingBox(10, 10, 30, 20)] * 12
    assert kmeans_anchors(boxes, 1).tolist() == [[30.0, 20.0]]


def test_two_separated_clusters(rng):
    small = rng.normal(10, 0.2, size=(40, 2))
    large = rng.normal(100, 1.0, size=(40, 2))
    result = kmeans_fit(np.vstack([small, large]), 2, seed=1)
    assert np.all(result.assignments[:40] == 0)
    assert np.all(result.assignments[40:] == 1)
    assert np.allclose(result.anchors[0], 10, atol=1.0)
    assert np.allclose(result.anchors[1], 100, atol=5.0)


def test_objective_never_increases(rng):
    shapes = rng.uniform(5, 80, size=(200, 2))
    history = kmeans_fit(shapes, 10, seed=2).objective_history
    assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))


def test_sorted_by_area_and_deterministic(rng):
    shapes = rng.uniform(5, 80, size=(100, 2))
    first = kmeans_anchors(shapes, 5, seed=4)
    areas = first.prod(axis=1)
    assert np.all(np.diff(areas) >= 0)
    assert np.array_equal(first, kmeans_anchors(shapes, 5, seed=4))


def test_unit_rescales():
    shapes = [(64.0, 32.0), (64.0, 32.0)]
    assert kmeans_anchors(shapes, 1, unit=32.0).tolist() == [[2.0, 1.0]]


@pytest.mark.parametrize("k", [0, 3])
def test_bad_cluster_count(k):
    with pytest.raises(ValueError):
        kmeans_anchors([(1.0, 1.0), (1.0, 1.0), (2.0, 2.0)], k)
