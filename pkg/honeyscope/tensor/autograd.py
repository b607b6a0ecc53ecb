"""
Dense tensors with reverse-mode differentiation.

A Tensor wraps a contiguous numpy array. Every differentiable operation is a
Function subclass; calling Function.apply records the function on the output
tensor so that backward() can walk the graph in reverse topological order.
"""

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import List

import numpy as np

from honeyscope.errors import NonFiniteError, ShapeError

logger = logging.getLogger(__name__)

PRECISIONS = {
    'float32': np.float32,
    'float64': np.float64,
}

_state = {
    'dtype': np.float32,
    'grad_enabled': True,
    'check_finite': True,
}


def default_dtype():
    return _state['dtype']


@contextmanager
def precision(name):
    """Create new tensors with the given storage precision ('float32' or 'float64')."""
    if name not in PRECISIONS:
        raise ValueError(f"Precision '{name}' not available. Available precisions: {list(PRECISIONS)}")
    previous = _state['dtype']
    _state['dtype'] = PRECISIONS[name]
    try:
        yield
    finally:
        _state['dtype'] = previous


@contextmanager
def no_grad():
    previous = _state['grad_enabled']
    _state['grad_enabled'] = False
    try:
        yield
    finally:
        _state['grad_enabled'] = previous


def is_grad_enabled():
    return _state['grad_enabled']


def set_finite_checks(enabled):
    _state['check_finite'] = bool(enabled)


def check_finite(array, source):
    if _state['check_finite'] and not np.all(np.isfinite(array)):
        bad = int(np.size(array) - np.count_nonzero(np.isfinite(array)))
        raise NonFiniteError(f"{source} produced {bad} non-finite value(s)", source=source)


class Tensor:
    """
    n-dimensional float array with an optional gradient buffer.

    Spatial tensors are laid out channels-last: H x W x C, or N x H x W x C
    with a leading batch axis.
    """

    # numpy defers to the reflected operators below instead of broadcasting over the object
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, dtype=None, _ctx=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
                dtype = data.dtype
            else:
                dtype = default_dtype()
        self.data = np.ascontiguousarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._ctx = _ctx

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self):
        return self._ctx is None

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0])

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        grad_note = ', requires_grad=True' if self.requires_grad else ''
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{grad_note})"

    # Arithmetic routes through the Function subclasses in ops.py.
    def __add__(self, other):
        from honeyscope.tensor import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from honeyscope.tensor import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from honeyscope.tensor import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from honeyscope.tensor import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from honeyscope.tensor import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from honeyscope.tensor import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from honeyscope.tensor import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from honeyscope.tensor import ops
        return ops.div(other, self)

    def __neg__(self):
        from honeyscope.tensor import ops
        return ops.neg(self)

    def __pow__(self, exponent):
        from honeyscope.tensor import ops
        return ops.power(self, exponent)

    def __matmul__(self, other):
        from honeyscope.tensor import ops
        return ops.matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        from honeyscope.tensor import ops
        return ops.sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from honeyscope.tensor import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from honeyscope.tensor import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)


def as_tensor(value):
    if value is None or isinstance(value, Tensor):
        return value
    return Tensor(value)


class Function:
    """
    Base class for differentiable operations.

    Subclasses implement forward() on raw arrays and backward() returning one
    gradient (or None) per input.
    """

    def __init__(self, *inputs):
        self.inputs = inputs
        self.needs_grad = False

    def forward(self, *arrays, **kwargs):
        raise NotImplementedError("Subclass must implement forward()")

    def backward(self, grad):
        raise NotImplementedError("Subclass must implement backward()")

    @classmethod
    def apply(cls, *inputs, **kwargs):
        tensors = [as_tensor(x) for x in inputs]
        ctx = cls(*tensors)
        ctx.needs_grad = is_grad_enabled() and any(t is not None and t.requires_grad for t in tensors)
        out = ctx.forward(*[None if t is None else t.data for t in tensors], **kwargs)
        check_finite(out, cls.__name__)
        if not ctx.needs_grad:
            return Tensor(out)
        return Tensor(out, requires_grad=True, _ctx=ctx)


@dataclass
class Graph:
    """Tensors reachable from an output, ordered so that inputs precede the ops using them."""
    nodes: List[Tensor] = field(default_factory=list)

    @classmethod
    def from_output(cls, output):
        order = []
        visited = set()
        stack = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node._ctx is not None:
                for parent in node._ctx.inputs:
                    if parent is not None and parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return cls(order)

    @property
    def leaves(self):
        return [node for node in self.nodes if node.is_leaf]


def backward(loss):
    """
    Populate .grad on every requires_grad leaf reachable from a scalar loss.

    The recorded graph is consumed: intermediate tensors drop their op record.
    """
    if loss.size != 1:
        raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("Loss does not depend on any tensor that requires grad")

    graph = Graph.from_output(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(graph.nodes):
        grad = grads.pop(id(node), None)
        if grad is None:
            continue
        if node.is_leaf:
            node.grad = grad.copy() if node.grad is None else node.grad + grad
            continue
        ctx = node._ctx
        input_grads = ctx.backward(grad)
        for parent, parent_grad in zip(ctx.inputs, input_grads):
            if parent is None or parent_grad is None or not parent.requires_grad:
                continue
            if parent_grad.shape != parent.shape:
                raise ShapeError(
                    f"{type(ctx).__name__} returned gradient of shape {parent_grad.shape} "
                    f"for input of shape {parent.shape}")
            check_finite(parent_grad, f"{type(ctx).__name__}.backward")
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + parent_grad
            else:
                grads[key] = parent_grad
        node._ctx = None
    logger.debug(f"backward visited {len(graph.nodes)} tensors")
