"""
The pollen detector network.

A darknet-style trunk of 3 x 3 / 1 x 1 convolutions and 2 x 2 max pools
(416 -> 13), a skip branch tapped at the last 26 x 26 activation, squeezed
to 64 channels and folded into 13 x 13 x 256 by space-to-depth, then
concatenated with the trunk and reduced to one prediction vector per anchor.
"""

import logging
from dataclasses import dataclass, field, asdict
from typing import List, Tuple

import numpy as np

from honeyscope.errors import ConfigError, ShapeError
from honeyscope.tensor import ops
from honeyscope.tensor.autograd import Tensor, default_dtype, no_grad
from honeyscope.detector.boxes import CLASS_NAMES
from honeyscope.detector.layers import Convolutional, MaxPool, Reorg, Route, Region

logger = logging.getLogger(__name__)

DOWNSAMPLE = 32
SKIP_FILTERS = 64

# (type, filters, size) rows of the trunk, input to the 13 x 13 x 1024 stage.
TRUNK = [
    ('convolutional', 32, 3),
    ('maxpool',),
    ('convolutional', 64, 3),
    ('maxpool',),
    ('convolutional', 128, 3),
    ('convolutional', 64, 1),
    ('convolutional', 128, 3),
    ('maxpool',),
    ('convolutional', 256, 3),
    ('convolutional', 128, 1),
    ('convolutional', 256, 3),
    ('maxpool',),
    ('convolutional', 512, 3),
    ('convolutional', 256, 1),
    ('convolutional', 512, 3),
    ('maxpool',),
    ('convolutional', 1024, 3),
    ('convolutional', 512, 1),
    ('convolutional', 1024, 3),
    ('convolutional', 512, 1),
    ('convolutional', 1024, 3),
    ('convolutional', 1024, 3),
    ('convolutional', 1024, 3),
]
HEAD_FILTERS = 1024

DEFAULT_ANCHORS = [
    (0.50, 0.50), (0.65, 0.60), (0.75, 0.80), (0.90, 0.85), (1.00, 1.05),
    (1.15, 1.10), (1.30, 1.30), (1.45, 1.40), (1.65, 1.60), (1.90, 1.90),
]


@dataclass
class DetectorConfig:
    num_anchors: int = 10
    num_classes: int = 3
    input_extent: int = 416
    width_scale: float = 1.0
    anchors: List[Tuple[float, float]] = field(default_factory=lambda: list(DEFAULT_ANCHORS))
    class_names: List[str] = field(default_factory=lambda: list(CLASS_NAMES))
    leaky_slope: float = 0.1
    bn_momentum: float = 0.99
    bn_eps: float = 1e-5

    @property
    def grid_extent(self):
        return self.input_extent // DOWNSAMPLE

    @property
    def values_per_anchor(self):
        return 5 + self.num_classes

    def validate(self):
        if self.num_anchors <= 0 or self.num_classes <= 0:
            raise ConfigError(f"Need at least one anchor and one class, got B={self.num_anchors}, C={self.num_classes}")
        if self.input_extent <= 0 or self.input_extent % DOWNSAMPLE:
            raise ConfigError(f"Input extent must be a positive multiple of {DOWNSAMPLE}, got {self.input_extent}")
        if len(self.anchors) != self.num_anchors:
            raise ConfigError(f"{len(self.anchors)} anchors given for B={self.num_anchors}")
        if any(w <= 0 or h <= 0 for w, h in self.anchors):
            raise ConfigError(f"Anchors must be positive, got {self.anchors}")
        if len(self.class_names) != self.num_classes:
            raise ConfigError(f"{len(self.class_names)} class names given for C={self.num_classes}")
        if self.width_scale <= 0:
            raise ConfigError(f"Width scale must be positive, got {self.width_scale}")

    def to_dict(self):
        data = asdict(self)
        data['anchors'] = [list(map(float, a)) for a in self.anchors]
        return data

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data['anchors'] = [tuple(a) for a in data.get('anchors', DEFAULT_ANCHORS)]
        return cls(**data)


class DetectorModel:
    """Ordered layers, anchors and class list of a detector."""

    def __init__(self, config, layers):
        self.config = config
        self.layers = layers
        self.training = True
        referenced = set()
        for layer in layers:
            referenced.update(layer.sources)
        self._kept_outputs = referenced

    @property
    def anchors(self):
        return np.asarray(self.config.anchors, dtype=np.float64)

    @property
    def class_names(self):
        return self.config.class_names

    @property
    def grid_extent(self):
        return self.config.grid_extent

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def parameter_layers(self):
        return [layer for layer in self.layers if layer.buffers()]

    def train(self, mode=True):
        self.training = mode
        return self

    def eval(self):
        return self.train(False)

    def forward(self, images, hook=None):
        """
        Run the network.

        Args:
            images: H x W x 3 or N x H x W x 3, values in [0, 1]
            hook: optional callable(layer, output Tensor) invoked after every layer

        Returns:
            Tensor: raw grid, N x S x S x B x (5 + C) (leading axis dropped for a single image)
        """
        x = images if isinstance(images, Tensor) else Tensor(np.asarray(images, dtype=default_dtype()))
        single = x.ndim == 3
        if single:
            x = ops.reshape(x, (1,) + x.shape)
        extent = self.config.input_extent
        if x.ndim != 4 or x.shape[1:] != (extent, extent, 3):
            raise ShapeError(f"Detector expects {extent} x {extent} x 3 input, got {images.shape}")

        outputs = {}
        previous = x
        for layer in self.layers:
            inputs = [outputs[name] for name in layer.sources] if layer.sources else [previous]
            previous = layer.forward(inputs, self.training)
            if layer.name in self._kept_outputs:
                outputs[layer.name] = previous
            if hook is not None:
                hook(layer, previous)
        if single:
            previous = ops.reshape(previous, previous.shape[1:])
        return previous

    __call__ = forward

    def shape_audit(self):
        """Run a blank image through the network in inference mode; returns (name, description, shape) rows."""
        rows = []
        extent = self.config.input_extent
        was_training = self.training
        self.eval()
        try:
            with no_grad():
                self.forward(np.zeros((1, extent, extent, 3), dtype=default_dtype()),
                             hook=lambda layer, out: rows.append((layer, tuple(out.shape[1:]))))
        finally:
            self.train(was_training)
        return [(layer.name, layer.describe(), shape) for layer, shape in rows if layer.in_table]


def _scaled(filters, scale):
    return max(1, int(round(filters * scale)))


def build_network(config=None, seed=0):
    """
    Build a detector with freshly initialized weights.

    Raises:
        ConfigError: If the configuration is invalid
    """
    config = config or DetectorConfig()
    config.validate()
    rng = np.random.default_rng(seed)
    conv_kwargs = dict(leaky_slope=config.leaky_slope, bn_momentum=config.bn_momentum, bn_eps=config.bn_eps)

    layers = []
    channels = 3
    conv_index = pool_index = 0
    for row in TRUNK:
        if row[0] == 'maxpool':
            pool_index += 1
            layers.append(MaxPool(f'pool{pool_index}'))
            continue
        _, filters, size = row
        conv_index += 1
        filters = _scaled(filters, config.width_scale)
        layers.append(Convolutional(f'conv{conv_index}', channels, filters, size, rng=rng, **conv_kwargs))
        channels = filters

    # the skip tap is the activation feeding the last pool
    last_pool = max(i for i, layer in enumerate(layers) if isinstance(layer, MaxPool))
    tap = layers[last_pool - 1]
    trunk_out = layers[-1]
    skip_filters = _scaled(SKIP_FILTERS, config.width_scale)
    layers.append(Convolutional('skip_conv', tap.filters, skip_filters, 1, rng=rng,
                                sources=[tap.name], in_table=False, **conv_kwargs))
    layers.append(Reorg('skip_reorg', block=2, in_table=False))
    layers.append(Route('concat', sources=[trunk_out.name, 'skip_reorg']))
    channels = trunk_out.filters + skip_filters * 4

    head_filters = _scaled(HEAD_FILTERS, config.width_scale)
    layers.append(Convolutional(f'conv{conv_index + 1}', channels, head_filters, 3, rng=rng, **conv_kwargs))
    out_filters = config.num_anchors * config.values_per_anchor
    layers.append(Convolutional('head', head_filters, out_filters, 1, batch_norm=False, rng=rng, **conv_kwargs))
    layers.append(Region('region', config.num_anchors, config.num_classes))

    grid = config.grid_extent
    logger.info(f"Built detector: {len(layers)} layers, input {config.input_extent}, grid {grid}, "
                f"width scale {config.width_scale}")
    logger.info(f"Head emits {grid} x {grid} x {out_filters}, viewed as {grid} x {grid} x {config.num_anchors} x "
                f"{config.values_per_anchor} (4 box + 1 objectness + {config.num_classes} class values per anchor); "
                f"a 6-value anchor vector cannot carry {config.num_classes} class scores")
    return DetectorModel(config, layers)
