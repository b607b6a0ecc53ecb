"""
Target assignment and the YOLO training objective.

Every term is summed over anchors and averaged over the images of a batch:
    coord = lambda_coord * sum_obj [(sigmoid(txy) - offset)^2 + (twh - ln(wh / anchor))^2]
    obj   = sum_obj (sigmoid(to) - IoU(predicted box, gt))^2
    noobj = lambda_noobj * sum_noobj sigmoid(to)^2
    class = -sum_obj log softmax(class logits)[gt class]
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logit

from honeyscope.errors import NonFiniteError, ShapeError
from honeyscope.tensor import ops
from honeyscope.tensor.autograd import Tensor, as_tensor, no_grad
from honeyscope.detector.boxes import BoundingBox, centered_iou, iou_matrix, paired_iou
from honeyscope.detector.decode import decode_boxes

logger = logging.getLogger(__name__)

LAMBDA_COORD = 5.0
LAMBDA_NOOBJ = 0.5
NOOBJ_IOU = 0.6
# keeps logit(offset) finite for centers on a cell edge
OFFSET_EPS = 1e-9


@dataclass
class TargetGrid:
    """
    Regression targets and masks laid out like a raw grid, S x S x B (optionally N x S x S x B).

    offsets are the in-cell center position that sigmoid(tx), sigmoid(ty) should
    reach; log_scales are ln(w / anchor_w), ln(h / anchor_h); class_ids is -1
    wherever no anchor is responsible.
    """
    offsets: np.ndarray
    log_scales: np.ndarray
    boxes: np.ndarray
    class_ids: np.ndarray
    obj_mask: np.ndarray
    noobj_mask: np.ndarray
    anchors: np.ndarray
    input_extent: int
    num_classes: int

    @property
    def batched(self):
        return self.obj_mask.ndim == 4

    @property
    def grid_extent(self):
        return self.obj_mask.shape[-3]

    @property
    def num_objects(self):
        return int(self.obj_mask.sum())

    def raw_targets(self):
        """(tx, ty, tw, th): the raw values that decode exactly to each responsible box."""
        offsets = np.clip(self.offsets, OFFSET_EPS, 1.0 - OFFSET_EPS)
        return np.concatenate([logit(offsets), self.log_scales], axis=-1)

    @classmethod
    def stack(cls, grids):
        """Batch single-image grids along a new leading axis."""
        if not grids:
            raise ValueError("Cannot stack an empty list of target grids")
        first = grids[0]
        return cls(
            offsets=np.stack([g.offsets for g in grids]),
            log_scales=np.stack([g.log_scales for g in grids]),
            boxes=np.stack([g.boxes for g in grids]),
            class_ids=np.stack([g.class_ids for g in grids]),
            obj_mask=np.stack([g.obj_mask for g in grids]),
            noobj_mask=np.stack([g.noobj_mask for g in grids]),
            anchors=first.anchors,
            input_extent=first.input_extent,
            num_classes=first.num_classes,
        )


@dataclass
class LossBreakdown:
    objective: Tensor
    coord_term: float
    obj_term: float
    noobj_term: float
    class_term: float

    @property
    def total(self):
        return self.objective.item()

    def as_dict(self):
        return {
            'total': self.total,
            'coord': self.coord_term,
            'obj': self.obj_term,
            'noobj': self.noobj_term,
            'class': self.class_term,
        }


def assign_targets(gt_boxes, anchors, grid_extent, image_extent, num_classes=3, noobj_iou=NOOBJ_IOU):
    """
    Build the target grid for one image.

    Each ground-truth box goes to the cell holding its center. Within a cell,
    boxes and anchors are paired one to one so that the summed overlap of box
    and anchor shapes, both centered at the origin, is largest; a box whose
    best anchor is taken falls back to the next free one. Boxes beyond the
    anchor count of their cell are dropped with a warning.

    Anchor priors sitting at their cell centers that overlap any ground truth
    by more than `noobj_iou` are left out of the no-object mask.

    Args:
        gt_boxes: list of (BoundingBox, class_id) in pixels of an image_extent x image_extent frame
        anchors: B (w, h) priors in grid-cell units
        grid_extent: S
        image_extent: Side of the image in pixels
        num_classes: C
        noobj_iou: No-object exclusion threshold

    Raises:
        ValueError: If a box center lies outside the frame or a class id is out of range
    """
    anchors = np.asarray(anchors, dtype=np.float64).reshape(-1, 2)
    num_anchors = len(anchors)
    size = grid_extent
    cell = image_extent / size
    anchor_px = anchors * cell

    offsets = np.zeros((size, size, num_anchors, 2))
    log_scales = np.zeros((size, size, num_anchors, 2))
    boxes = np.zeros((size, size, num_anchors, 4))
    class_ids = np.full((size, size, num_anchors), -1, dtype=np.int64)
    obj_mask = np.zeros((size, size, num_anchors), dtype=bool)

    cells = {}
    for index, (box, class_id) in enumerate(gt_boxes):
        if not (0 <= box.cx <= image_extent and 0 <= box.cy <= image_extent):
            raise ValueError(f"Box center ({box.cx}, {box.cy}) lies outside the {image_extent} x {image_extent} frame")
        if not 0 <= class_id < num_classes:
            raise ValueError(f"Class id {class_id} out of range for {num_classes} classes")
        j = min(int(box.cx // cell), size - 1)
        i = min(int(box.cy // cell), size - 1)
        cells.setdefault((i, j), []).append(index)

    for (i, j), members in cells.items():
        shapes = [(gt_boxes[k][0].w, gt_boxes[k][0].h) for k in members]
        rows, slots = linear_sum_assignment(centered_iou(shapes, anchor_px), maximize=True)
        if len(rows) < len(members):
            logger.warning(f"Cell ({i}, {j}) holds {len(members)} boxes for {num_anchors} anchors; "
                           f"dropping {len(members) - len(rows)}")
        for row, b in zip(rows, slots):
            box, class_id = gt_boxes[members[row]]
            obj_mask[i, j, b] = True
            offsets[i, j, b] = (box.cx / cell - j, box.cy / cell - i)
            log_scales[i, j, b] = (np.log(box.w / anchor_px[b, 0]), np.log(box.h / anchor_px[b, 1]))
            boxes[i, j, b] = (box.cx, box.cy, box.w, box.h)
            class_ids[i, j, b] = class_id

    ignore = np.zeros_like(obj_mask)
    if gt_boxes:
        centers = (np.arange(size) + 0.5) * cell
        priors = np.empty((size, size, num_anchors, 4))
        priors[..., 0] = centers[None, :, None]
        priors[..., 1] = centers[:, None, None]
        priors[..., 2:] = anchor_px
        truth = np.array([(b.cx, b.cy, b.w, b.h) for b, _ in gt_boxes])
        best = iou_matrix(priors.reshape(-1, 4), truth).max(axis=1)
        ignore = best.reshape(obj_mask.shape) > noobj_iou

    return TargetGrid(
        offsets=offsets,
        log_scales=log_scales,
        boxes=boxes,
        class_ids=class_ids,
        obj_mask=obj_mask,
        noobj_mask=~obj_mask & ~ignore,
        anchors=anchors,
        input_extent=image_extent,
        num_classes=num_classes,
    )


def _batched(array, batched):
    return array if batched else array[None]


def objectness_targets(raw, targets):
    """
    IoU of each responsible anchor's decoded box with its ground truth, zero elsewhere.

    Computed from the values of `raw` only, so it acts as a constant in the loss.
    """
    grid = raw.data if isinstance(raw, Tensor) else np.asarray(raw)
    grids = _batched(grid, grid.ndim == 5)
    truth = _batched(targets.boxes, targets.batched)
    mask = _batched(targets.obj_mask, targets.batched)
    out = np.zeros(mask.shape)
    for n in range(len(grids)):
        predicted = decode_boxes(grids[n], targets.anchors, targets.input_extent)
        out[n] = np.where(mask[n], paired_iou(predicted, truth[n]), 0.0)
    return out if grid.ndim == 5 else out[0]


def _term(name, compute):
    try:
        value = compute()
    except NonFiniteError as e:
        logger.error(f"Loss term '{name}' is not finite")
        raise NonFiniteError(f"Loss term '{name}' is not finite: {e}", source=name) from e
    if not np.all(np.isfinite(value.data)):
        logger.error(f"Loss term '{name}' is not finite")
        raise NonFiniteError(f"Loss term '{name}' is not finite", source=name)
    return value


def yolo_loss(raw, targets, lambda_coord=LAMBDA_COORD, lambda_noobj=LAMBDA_NOOBJ, obj_targets=None):
    """
    Differentiable YOLO loss.

    Args:
        raw: Raw grid Tensor, S x S x B x (5 + C) or N x S x S x B x (5 + C)
        targets: TargetGrid with the same leading shape
        lambda_coord: Weight of the box regression term
        lambda_noobj: Weight of the no-object term
        obj_targets: Fixed objectness targets; computed from raw when omitted

    Returns:
        LossBreakdown: differentiable objective plus the four weighted terms

    Raises:
        ShapeError: If raw and targets disagree
        NonFiniteError: If any term is NaN or Inf, naming the term
    """
    raw = as_tensor(raw)
    values = 5 + targets.num_classes
    if raw.shape[:-1] != targets.obj_mask.shape or raw.shape[-1] != values:
        raise ShapeError(f"Raw grid {raw.shape} does not match targets {targets.obj_mask.shape} x {values}")
    if obj_targets is None:
        obj_targets = objectness_targets(raw, targets)
    batch = raw.shape[0] if raw.ndim == 5 else 1
    dtype = raw.dtype

    obj = targets.obj_mask[..., None].astype(dtype)
    noobj = targets.noobj_mask[..., None].astype(dtype)
    onehot = np.zeros(targets.class_ids.shape + (targets.num_classes,), dtype=dtype)
    responsible = targets.class_ids >= 0
    onehot[responsible, targets.class_ids[responsible]] = 1.0
    offsets = targets.offsets.astype(dtype)
    log_scales = targets.log_scales.astype(dtype)
    iou_target = np.asarray(obj_targets, dtype=dtype)[..., None]

    def coord():
        xy = ops.sigmoid(ops.slice_last(raw, 0, 2))
        wh = ops.slice_last(raw, 2, 4)
        squared = ((xy - offsets) ** 2 * obj).sum() + ((wh - log_scales) ** 2 * obj).sum()
        return squared * (lambda_coord / batch)

    def confidence():
        return ops.sigmoid(ops.slice_last(raw, 4, 5))

    def objectness():
        return ((confidence() - iou_target) ** 2 * obj).sum() * (1.0 / batch)

    def no_object():
        return (confidence() ** 2 * noobj).sum() * (lambda_noobj / batch)

    def classification():
        log_probs = ops.log_softmax(ops.slice_last(raw, 5, values))
        return (log_probs * onehot).sum() * (-1.0 / batch)

    coord_term = _term('coord', coord)
    obj_term = _term('obj', objectness)
    noobj_term = _term('noobj', no_object)
    class_term = _term('class', classification)
    objective = _term('total', lambda: coord_term + obj_term + noobj_term + class_term)
    return LossBreakdown(
        objective=objective,
        coord_term=coord_term.item(),
        obj_term=obj_term.item(),
        noobj_term=noobj_term.item(),
        class_term=class_term.item(),
    )


def _random_ground_truth(rng, count, extent, num_classes):
    boxes = []
    for _ in range(count):
        w, h = rng.uniform(0.15, 0.4, size=2) * extent
        cx = rng.uniform(w / 2, extent - w / 2)
        cy = rng.uniform(h / 2, extent - h / 2)
        boxes.append((BoundingBox(cx, cy, w, h), int(rng.integers(num_classes))))
    return boxes


def _case_yolo_loss(rng):
    size, num_anchors, num_classes, extent = 3, 2, 3, 96
    anchors = rng.uniform(0.5, 2.0, size=(num_anchors, 2))
    gt = _random_ground_truth(rng, 2, extent, num_classes)
    targets = TargetGrid.stack([assign_targets(gt, anchors, size, extent, num_classes)])
    raw = rng.normal(size=(1, size, size, num_anchors, 5 + num_classes))
    fixed = objectness_targets(raw, targets)
    return (lambda r: yolo_loss(r, targets, obj_targets=fixed).objective), [raw]


def _case_detector_loss(rng):
    from honeyscope.detector.network import DetectorConfig, build_network

    extent = 64
    config = DetectorConfig(num_anchors=2, anchors=[(1.0, 1.0), (1.5, 1.2)], input_extent=extent,
                            width_scale=1 / 32)
    model = build_network(config, seed=int(rng.integers(2 ** 31))).eval()
    gt = _random_ground_truth(rng, 2, extent, config.num_classes)
    targets = TargetGrid.stack([assign_targets(gt, config.anchors, config.grid_extent, extent)])
    image = rng.uniform(size=(1, extent, extent, 3))
    with no_grad():
        fixed = objectness_targets(model(image), targets)
    return (lambda x: yolo_loss(model(x), targets, obj_targets=fixed).objective), [image]


LOSS_CASES = {
    'yolo_loss': _case_yolo_loss,
    'detector_loss': _case_detector_loss,
}
