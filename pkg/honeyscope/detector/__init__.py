from honeyscope.detector.boxes import (
    CLASS_NAMES, BoundingBox, Detection, iou, nms, save_detections, load_detections,
)
from honeyscope.detector.network import DetectorConfig, DetectorModel, build_network
from honeyscope.detector.decode import decode
from honeyscope.detector.loss import TargetGrid, LossBreakdown, assign_targets, yolo_loss
from honeyscope.detector.anchors import kmeans_anchors
from honeyscope.detector.weights import save_weights, load_weights, load_optimizer_state
