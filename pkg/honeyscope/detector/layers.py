"""
Layer types of the detector.

Every layer reads one or more named outputs of earlier layers (the previous
layer by default), so a skip branch is just a layer whose source is further
back. Parameterized layers expose their buffers in a fixed order for the
weights file.
"""

from abc import ABC, abstractmethod

import numpy as np

from honeyscope.errors import ShapeError
from honeyscope.tensor import ops
from honeyscope.tensor.autograd import Tensor, default_dtype

CONV_BN = 1
CONV_LINEAR = 2


class Layer(ABC):
    type_name = None

    def __init__(self, name, sources=None, in_table=True):
        self.name = name
        self.sources = tuple(sources) if sources else ()
        self.in_table = in_table

    def parameters(self):
        return []

    def buffers(self):
        """Arrays written to the weights file, in file order."""
        return []

    def load_buffers(self, arrays):
        if arrays:
            raise ValueError(f"Layer '{self.name}' holds no parameters but got {len(arrays)} buffers")

    @abstractmethod
    def forward(self, inputs, training):
        """
        Args:
            inputs: list of Tensors, one per source
            training: batch-norm mode

        Returns:
            Tensor: the layer output
        """
        pass

    def describe(self):
        return self.type_name

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


class Convolutional(Layer):
    """Convolution, then batch norm and leaky ReLU, or a linear convolution."""
    type_name = 'convolutional'

    def __init__(self, name, in_channels, filters, size, stride=1, batch_norm=True,
                 leaky_slope=0.1, bn_momentum=0.99, bn_eps=1e-5, rng=None, sources=None, in_table=True):
        super().__init__(name, sources, in_table)
        self.filters = filters
        self.size = size
        self.stride = stride
        self.batch_norm = batch_norm
        self.leaky_slope = leaky_slope
        self.bn_momentum = bn_momentum
        self.bn_eps = bn_eps

        rng = rng if rng is not None else np.random.default_rng(0)
        dtype = default_dtype()
        fan_in = size * size * in_channels
        kernel = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(size, size, in_channels, filters))
        self.kernel = Tensor(kernel.astype(dtype), requires_grad=True)
        # batch norm cancels a conv bias, so it stays fixed at zero there
        self.bias = Tensor(np.zeros(filters, dtype=dtype), requires_grad=not batch_norm)
        if batch_norm:
            self.gamma = Tensor(np.ones(filters, dtype=dtype), requires_grad=True)
            self.beta = Tensor(np.zeros(filters, dtype=dtype), requires_grad=True)
            self.running_mean = np.zeros(filters, dtype=dtype)
            self.running_var = np.ones(filters, dtype=dtype)

    @property
    def kind(self):
        return CONV_BN if self.batch_norm else CONV_LINEAR

    @property
    def in_channels(self):
        return self.kernel.shape[2]

    def parameters(self):
        if self.batch_norm:
            return [self.kernel, self.gamma, self.beta]
        return [self.kernel, self.bias]

    def buffers(self):
        arrays = [self.kernel.data, self.bias.data]
        if self.batch_norm:
            arrays += [self.gamma.data, self.beta.data, self.running_mean, self.running_var]
        return arrays

    def load_buffers(self, arrays):
        expected = 6 if self.batch_norm else 2
        if len(arrays) != expected:
            raise ValueError(f"Layer '{self.name}' expects {expected} buffers, got {len(arrays)}")
        shapes = [b.shape for b in self.buffers()]
        for array, shape in zip(arrays, shapes):
            if array.shape != shape:
                raise ShapeError(f"Layer '{self.name}' buffer shape {array.shape} does not match {shape}")
        dtype = self.kernel.dtype
        self.kernel.data = np.array(arrays[0], dtype=dtype)
        self.bias.data = np.array(arrays[1], dtype=dtype)
        if self.batch_norm:
            self.gamma.data = np.array(arrays[2], dtype=dtype)
            self.beta.data = np.array(arrays[3], dtype=dtype)
            self.running_mean = np.array(arrays[4], dtype=dtype)
            self.running_var = np.array(arrays[5], dtype=dtype)

    def parameter_count(self):
        """Kernel and bias entries (batch-norm affine terms not included)."""
        return self.kernel.size + self.bias.size

    def forward(self, inputs, training):
        x = ops.conv2d(inputs[0], self.kernel, self.bias, stride=self.stride, padding='same')
        if not self.batch_norm:
            return x
        x = ops.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                           training=training, momentum=self.bn_momentum, eps=self.bn_eps)
        return ops.leaky_relu(x, self.leaky_slope)

    def describe(self):
        suffix = '' if self.batch_norm else ' linear'
        return f"convolutional {self.filters} {self.size} x {self.size} / {self.stride}{suffix}"


class MaxPool(Layer):
    type_name = 'maxpool'

    def forward(self, inputs, training):
        return ops.maxpool2(inputs[0])

    def describe(self):
        return 'maxpool 2 x 2 / 2'


class Reorg(Layer):
    """Space-to-depth rearrangement of the skip branch."""
    type_name = 'reorg'

    def __init__(self, name, block=2, sources=None, in_table=True):
        super().__init__(name, sources, in_table)
        self.block = block

    def forward(self, inputs, training):
        return ops.space_to_depth(inputs[0], self.block)

    def describe(self):
        return f"reorg / {self.block}"


class Route(Layer):
    """Channel concatenation of its sources, in order."""
    type_name = 'route'

    def forward(self, inputs, training):
        out = inputs[0]
        for other in inputs[1:]:
            out = ops.concat_channels(out, other)
        return out

    def describe(self):
        return 'concatenate'


class Region(Layer):
    """Views the head output as grid x grid x anchors x (5 + classes)."""
    type_name = 'region'

    def __init__(self, name, num_anchors, num_classes, sources=None, in_table=True):
        super().__init__(name, sources, in_table)
        self.num_anchors = num_anchors
        self.num_classes = num_classes

    def forward(self, inputs, training):
        x = inputs[0]
        n, h, w, c = x.shape
        values = 5 + self.num_classes
        if c != self.num_anchors * values:
            raise ShapeError(f"Region expects {self.num_anchors * values} channels, got {c}")
        return ops.reshape(x, (n, h, w, self.num_anchors, values))

    def describe(self):
        return 'reshape'


LAYERS = {
    'convolutional': Convolutional,
    'maxpool': MaxPool,
    'reorg': Reorg,
    'route': Route,
    'region': Region,
}
