import numpy as np
import pytest

from honeyscope.detector.boxes import (
    BoundingBox, Detection, centered_iou, iou, iou_matrix, load_detections, nms, save_detections)


def raster_iou(a, b, resolution=200):
    """Pixel-count IoU on a fine grid covering both boxes."""
    x1 = min(a.corners[0], b.corners[0])
    y1 = min(a.corners[1], b.corners[1])
    x2 = max(a.corners[2], b.corners[2])
    y2 = max(a.corners[3], b.corners[3])
    xs = x1 + (np.arange(int((x2 - x1) * resolution)) + 0.5) / resolution
    ys = y1 + (np.arange(int((y2 - y1) * resolution)) + 0.5) / resolution
    gx, gy = np.meshgrid(xs, ys)

    def inside(box):
        bx1, by1, bx2, by2 = box.corners
        return (gx >= bx1) & (gx < bx2) & (gy >= by1) & (gy < by2)
    ina, inb = inside(a), inside(b)
    return (ina & inb).sum() / (ina | inb).sum()


def brute_force_nms(detections, threshold):
    ordered = sorted(detections, key=lambda d: -d.confidence)
    kept = []
    for candidate in ordered:
        if all(k.class_id != candidate.class_id or iou(k.box, candidate.box) <= threshold for k in kept):
            kept.append(candidate)
    return kept


def random_detections(rng, count):
    return [Detection(BoundingBox(*rng.uniform(0, 100, size=2), *rng.uniform(5, 40, size=2)),
                      int(rng.integers(3)), float(rng.uniform()))
            for _ in range(count)]


def test_identical_boxes():
    box = BoundingBox(5.0, 5.0, 4.0, 2.0)
    assert iou(box, box) == 1.0


def test_disjoint_boxes():
    assert iou(BoundingBox(0, 0, 1, 1), BoundingBox(10, 10, 1, 1)) == 0.0


def test_overlapping_corner_boxes():
    a = BoundingBox.from_corners(0, 0, 2, 2)
    b = BoundingBox.from_corners(1, 1, 3, 3)
    assert iou(a, b) == pytest.approx(1 / 7)
    assert iou(a, b) == pytest.approx(raster_iou(a, b), abs=1e-3)


def test_iou_symmetric_and_bounded(rng):
    dets = random_detections(rng, 30)
    for a, b in zip(dets, dets[1:]):
        value = iou(a.box, b.box)
        assert value == iou(b.box, a.box)
        assert 0.0 <= value <= 1.0


def test_iou_matrix_matches_scalar(rng):
    dets = random_detections(rng, 12)
    rows = [[d.box.cx, d.box.cy, d.box.w, d.box.h] for d in dets]
    matrix = iou_matrix(rows, rows)
    for i, a in enumerate(dets):
        for j, b in enumerate(dets):
            assert matrix[i, j] == pytest.approx(iou(a.box, b.box))


def test_centered_iou():
    assert centered_iou([(2.0, 2.0)], [(2.0, 2.0), (1.0, 1.0)]).tolist() == [[1.0, 0.25]]


def test_box_needs_positive_extent():
    with pytest.raises(ValueError):
        BoundingBox(0.0, 0.0, 0.0, 1.0)


def test_nms_keeps_most_confident():
    box = BoundingBox(10, 10, 5, 5)
    kept = nms([Detection(box, 0, 0.8), Detection(box, 0, 0.9)], 0.5)
    assert [d.confidence for d in kept] == [0.9]


def test_nms_is_per_class():
    box = BoundingBox(10, 10, 5, 5)
    assert len(nms([Detection(box, 0, 0.9), Detection(box, 1, 0.8)], 0.5)) == 2


def test_nms_matches_brute_force(rng):
    for _ in range(5):
        dets = random_detections(rng, 50)
        assert nms(dets, 0.45) == brute_force_nms(dets, 0.45)


def test_nms_subset_and_idempotent(rng):
    dets = random_detections(rng, 50)
    once = nms(dets, 0.3)
    assert all(d in dets for d in once)
    assert nms(once, 0.3) == once


def test_nms_empty():
    assert nms([], 0.45) == []


@pytest.mark.parametrize("threshold", [0.0, 1.0, -0.2])
def test_nms_threshold_range(threshold):
    with pytest.raises(ValueError):
        nms([], threshold)


def test_detection_record_round_trip(tmp_path):
    records = {
        'slide_0001': [Detection(BoundingBox(100.5, 200.25, 40.0, 38.0), 2, 0.875),
                       Detection(BoundingBox(10.0, 20.0, 8.0, 6.0), 0, 0.95)],
        'slide_0002': [Detection(BoundingBox(5.0, 5.0, 4.0, 4.0), 1, 0.5)],
    }
    path = tmp_path / 'detections.txt'
    save_detections(path, records)
    lines = path.read_text().splitlines()
    assert lines[0] == 'slide_0001 round 10 20 8 6 0.95'
    loaded = load_detections(path)
    assert list(loaded) == ['slide_0001', 'slide_0002']
    assert loaded['slide_0001'][1] == records['slide_0001'][0]


def test_detection_record_errors(tmp_path):
    path = tmp_path / 'bad.txt'
    path.write_text('slide_0001 round 1 1 2 2 0.5\nslide_0001 oval 1 1 2 2 0.5\n')
    with pytest.raises(ValueError, match='line 2'):
        load_detections(path)
    path.write_text('slide_0001 round 1 1 2\n')
    with pytest.raises(ValueError, match='line 1'):
        load_detections(path)
