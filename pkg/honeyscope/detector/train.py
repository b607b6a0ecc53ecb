"""
Detector training loop.

Anchors come from k-means over the training boxes (unless resuming), then
each epoch walks a seeded shuffle of the images in mini-batches. Every epoch
appends a row to train_log.csv; best.plnw tracks the lowest epoch loss and
final.plnw the last state.
"""

import csv
import logging
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from honeyscope.errors import ConfigError, NonFiniteError, TrainingError
from honeyscope.tensor.optim import AVAILABLE_OPTIMIZERS, get_optimizer
from honeyscope.detector.anchors import kmeans_anchors
from honeyscope.detector.inference import prepare_image
from honeyscope.detector.loss import LAMBDA_COORD, LAMBDA_NOOBJ, NOOBJ_IOU, TargetGrid, assign_targets, yolo_loss
from honeyscope.detector.network import build_network
from honeyscope.detector.weights import save_weights
from honeyscope.utils import atomic_write

logger = logging.getLogger(__name__)

LOG_FIELDS = ['epoch', 'total', 'coord', 'obj', 'noobj', 'class']
LOG_NAME = 'train_log.csv'
BEST_NAME = 'best.plnw'
FINAL_NAME = 'final.plnw'


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 4
    learning_rate: float = 1e-3
    optimizer: str = 'adam'
    lambda_coord: float = LAMBDA_COORD
    lambda_noobj: float = LAMBDA_NOOBJ
    noobj_iou: float = NOOBJ_IOU
    kmeans_anchors: bool = True
    seed: int = 0

    def validate(self):
        if self.epochs < 0:
            raise ConfigError(f"Epochs must be non-negative, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"Batch size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"Learning rate must be positive, got {self.learning_rate}")
        if self.optimizer not in AVAILABLE_OPTIMIZERS:
            raise ConfigError(f"Optimizer '{self.optimizer}' not available. Available optimizers: {AVAILABLE_OPTIMIZERS}")
        if self.lambda_coord < 0 or self.lambda_noobj < 0:
            raise ConfigError("Loss weights must be non-negative")
        if not 0.0 < self.noobj_iou < 1.0:
            raise ConfigError(f"No-object IoU threshold must be in (0, 1), got {self.noobj_iou}")

    def to_dict(self):
        return asdict(self)


def load_training_set(items, extent):
    """
    Images and ground truth at network resolution.

    Returns:
        tuple: (N x extent x extent x 3 float32 array, list of [(BoundingBox, class_id), ...])
    """
    images = np.empty((len(items), extent, extent, 3), dtype=np.float32)
    ground_truth = []
    for n, item in enumerate(items):
        pixels = item.load()
        images[n] = prepare_image(pixels, extent)
        annotation = item.annotation
        sx, sy = extent / annotation.width, extent / annotation.height
        ground_truth.append([(box.scaled(sx, sy), class_id) for box, class_id in annotation.labels])
    logger.info(f"Loaded {len(items)} training images with {sum(len(g) for g in ground_truth)} boxes")
    return images, ground_truth


class Trainer:
    """Owns a detector, its optimizer and its output directory."""

    def __init__(self, detector_config, train_config, out_dir, model=None, optimizer_state=None):
        train_config.validate()
        self.config = train_config
        self.detector_config = model.config if model is not None else detector_config
        self.out_dir = Path(out_dir)
        self.model = model
        self.optimizer_state = optimizer_state
        self.optimizer = None
        self.targets = None
        self.history = []

    @property
    def log_path(self):
        return self.out_dir / LOG_NAME

    def _estimate_anchors(self, ground_truth):
        config = self.detector_config
        boxes = [box for boxes in ground_truth for box, _ in boxes]
        cell = config.input_extent / config.grid_extent
        distinct = len({(b.w, b.h) for b in boxes})
        if distinct < config.num_anchors:
            logger.warning(f"Only {distinct} distinct training box shapes for {config.num_anchors} anchors; "
                           f"keeping the configured anchors")
            return
        anchors = kmeans_anchors(boxes, config.num_anchors, seed=self.config.seed, unit=cell)
        config.anchors = [tuple(float(v) for v in a) for a in anchors]

    def setup(self, ground_truth):
        """Build the model (after k-means when enabled), the targets and the optimizer."""
        if self.model is None:
            if self.config.kmeans_anchors:
                self._estimate_anchors(ground_truth)
            self.model = build_network(self.detector_config, seed=self.config.seed)
        else:
            logger.info("Continuing from existing weights; anchors kept")
        config = self.detector_config
        self.targets = [assign_targets(gt, self.model.anchors, config.grid_extent, config.input_extent,
                                       config.num_classes, self.config.noobj_iou)
                        for gt in ground_truth]
        optimizer_class = get_optimizer(self.config.optimizer)
        self.optimizer = optimizer_class(self.model.parameters(), lr=self.config.learning_rate)
        if self.optimizer_state is not None:
            self._restore_optimizer()

    def _restore_optimizer(self):
        try:
            self.optimizer.load_state_dict(self.optimizer_state)
        except ValueError as e:
            logger.warning(f"Stored optimizer state not used, starting a fresh {self.optimizer.name} optimizer: {e}")
            return
        logger.info(f"Restored {self.optimizer.name} optimizer state at step {self.optimizer.state.step}")

    def train_step(self, images, indices):
        """One optimizer step on images[indices]; returns the LossBreakdown before the update."""
        self.model.train()
        self.optimizer.zero_grad()
        raw = self.model(images[indices])
        breakdown = yolo_loss(raw, TargetGrid.stack([self.targets[i] for i in indices]),
                              lambda_coord=self.config.lambda_coord, lambda_noobj=self.config.lambda_noobj)
        breakdown.objective.backward()
        self.optimizer.step()
        return breakdown

    def _write_log(self):
        with atomic_write(self.log_path) as f:
            writer = csv.DictWriter(f, fieldnames=LOG_FIELDS)
            writer.writeheader()
            for row in self.history:
                writer.writerow({key: (f"{value:.6g}" if key != 'epoch' else value) for key, value in row.items()})

    def _save(self, name, epoch, total):
        save_weights(self.model, self.out_dir / name, metadata={'epoch': epoch, 'loss': total,
                                                                'train': self.config.to_dict()},
                     optimizer=self.optimizer)

    def fit(self, images, ground_truth):
        """
        Train for config.epochs epochs.

        Returns:
            list: one dict per epoch with the mean loss terms

        Raises:
            TrainingError: If a loss term or gradient turns non-finite; the log so far is kept
        """
        if len(images) != len(ground_truth):
            raise ValueError(f"{len(images)} images but {len(ground_truth)} ground-truth lists")
        if not len(images):
            raise TrainingError("No training images")
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.setup(ground_truth)
        self._write_log()

        if self.config.epochs == 0:
            logger.info("Zero epochs requested; writing the initialized weights")
            self._save(FINAL_NAME, 0, None)
            self._save(BEST_NAME, 0, None)
            return self.history

        rng = np.random.default_rng(self.config.seed)
        best = np.inf
        batch_size = self.config.batch_size
        for epoch in range(1, self.config.epochs + 1):
            order = rng.permutation(len(images))
            sums = dict.fromkeys(LOG_FIELDS[1:], 0.0)
            for start in range(0, len(order), batch_size):
                indices = order[start:start + batch_size]
                try:
                    breakdown = self.train_step(images, indices)
                except NonFiniteError as e:
                    logger.error(f"Training aborted in epoch {epoch}: {e}")
                    self._write_log()
                    raise TrainingError(f"Training aborted in epoch {epoch}: {e}") from e
                for key, value in breakdown.as_dict().items():
                    sums[key] += value * len(indices)
            row = {'epoch': epoch}
            row.update({key: value / len(images) for key, value in sums.items()})
            self.history.append(row)
            self._write_log()
            logger.info(f"Epoch {epoch}/{self.config.epochs}: total {row['total']:.4f} (coord {row['coord']:.4f}, "
                        f"obj {row['obj']:.4f}, noobj {row['noobj']:.4f}, class {row['class']:.4f})")
            if row['total'] < best:
                best = row['total']
                self._save(BEST_NAME, epoch, best)
        self._save(FINAL_NAME, self.config.epochs, self.history[-1]['total'])
        return self.history
