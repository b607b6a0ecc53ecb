"""
Running a trained detector on source images.

Source frames (1080 x 1080 slides) are area-averaged down to the network
input, decoded, suppressed, and mapped back to source pixels.
"""

import logging

import numpy as np
from PIL import Image

from honeyscope.errors import ShapeError
from honeyscope.tensor.autograd import no_grad
from honeyscope.detector.boxes import Detection, nms
from honeyscope.detector.decode import decode

logger = logging.getLogger(__name__)

CONF_THRESHOLD = 0.5
NMS_IOU = 0.45


def prepare_image(pixels, extent):
    """
    Resize an H x W x 3 uint8 image to extent x extent with area averaging.

    Returns:
        np.ndarray: float32 in [0, 1]
    """
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ShapeError(f"Expected an H x W x 3 image, got shape {pixels.shape}")
    image = Image.fromarray(pixels.astype(np.uint8))
    if image.size != (extent, extent):
        image = image.resize((extent, extent), resample=Image.BOX)
    return np.asarray(image, dtype=np.float32) / 255.0


def to_source(detections, input_extent, source_width, source_height):
    """Rescale detections from network-input pixels to a source frame."""
    sx = source_width / input_extent
    sy = source_height / input_extent
    return [Detection(d.box.scaled(sx, sy), d.class_id, d.confidence) for d in detections]


def detect_prepared(model, batch, conf_threshold=CONF_THRESHOLD, nms_iou=NMS_IOU):
    """Detections in network-input pixels for an N x E x E x 3 float batch."""
    model.eval()
    with no_grad():
        raw = model(batch).data
    return [nms(decode(grid, model.anchors, conf_threshold, model.config.input_extent), nms_iou) for grid in raw]


def detect(model, pixels, conf_threshold=CONF_THRESHOLD, nms_iou=NMS_IOU):
    """
    Detect grains in one source image.

    Args:
        model: DetectorModel
        pixels: H x W x 3 uint8 source image
        conf_threshold: Minimum confidence kept by decode
        nms_iou: Suppression IoU threshold

    Returns:
        list: Detection objects in source pixels, highest confidence first
    """
    extent = model.config.input_extent
    prepared = prepare_image(pixels, extent)
    detections = detect_prepared(model, prepared[None], conf_threshold, nms_iou)[0]
    height, width = np.asarray(pixels).shape[:2]
    return to_source(detections, extent, width, height)


def detect_dataset(model, items, conf_threshold=CONF_THRESHOLD, nms_iou=NMS_IOU):
    """Run detect over dataset items; returns {image_id: [Detection, ...]} in item order."""
    results = {}
    for item in items:
        results[item.image_id] = detect(model, item.load(), conf_threshold, nms_iou)
        logger.debug(f"{item.image_id}: {len(results[item.image_id])} detections")
    logger.info(f"Detected {sum(len(d) for d in results.values())} grains in {len(results)} images")
    return results
