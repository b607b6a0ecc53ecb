"""
Differentiable operations.

Elementwise arithmetic broadcasts like numpy. Spatial operations take
channels-last tensors, H x W x C or N x H x W x C; a 3-D input gives a 3-D
output.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit, log_softmax as _log_softmax

from honeyscope.errors import ShapeError
from honeyscope.tensor.autograd import Function, Tensor, as_tensor

EXP_CAP = {
    np.dtype(np.float32): 80.0,
    np.dtype(np.float64): 700.0,
}


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _same_dtype(grad, like):
    return grad.astype(like.dtype, copy=False)


class Add(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad):
        return _unbroadcast(grad, self.shapes[0]), _unbroadcast(grad, self.shapes[1])


class Sub(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad):
        return _unbroadcast(grad, self.shapes[0]), _unbroadcast(-grad, self.shapes[1])


class Mul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return _unbroadcast(grad * self.b, self.a.shape), _unbroadcast(grad * self.a, self.b.shape)


class Div(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a / b

    def backward(self, grad):
        grad_a = _unbroadcast(grad / self.b, self.a.shape)
        grad_b = _unbroadcast(-grad * self.a / (self.b * self.b), self.b.shape)
        return grad_a, grad_b


class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


class Power(Function):
    def forward(self, a, exponent):
        self.a, self.exponent = a, exponent
        return a ** exponent

    def backward(self, grad):
        return (_same_dtype(grad * self.exponent * self.a ** (self.exponent - 1), self.a),)


class Exp(Function):
    def forward(self, a):
        self.out = np.exp(np.minimum(a, EXP_CAP[a.dtype]))
        return self.out

    def backward(self, grad):
        return (grad * self.out,)


class Log(Function):
    def forward(self, a):
        self.a = a
        with np.errstate(divide='ignore', invalid='ignore'):
            return np.log(a)

    def backward(self, grad):
        return (grad / self.a,)


class Sigmoid(Function):
    def forward(self, a):
        self.out = expit(a)
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1 - self.out),)


class Tanh(Function):
    def forward(self, a):
        self.out = np.tanh(a)
        return self.out

    def backward(self, grad):
        return (grad * (1 - self.out * self.out),)


class Softplus(Function):
    def forward(self, a):
        self.a = a
        return np.logaddexp(0, a).astype(a.dtype, copy=False)

    def backward(self, grad):
        return (grad * expit(self.a),)


class LeakyReLU(Function):
    def forward(self, a, slope):
        self.positive = a >= 0
        self.slope = slope
        return np.where(self.positive, a, a * slope).astype(a.dtype, copy=False)

    def backward(self, grad):
        return (np.where(self.positive, grad, grad * self.slope).astype(grad.dtype, copy=False),)


class Sum(Function):
    def forward(self, a, axis, keepdims):
        self.shape, self.axis, self.keepdims = a.shape, axis, keepdims
        return np.asarray(a.sum(axis=axis, keepdims=keepdims))

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.shape).copy(),)


class Reshape(Function):
    def forward(self, a, shape):
        self.shape = a.shape
        return a.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.shape),)


class SliceLast(Function):
    def forward(self, a, start, stop):
        self.shape, self.start, self.stop = a.shape, start, stop
        return np.ascontiguousarray(a[..., start:stop])

    def backward(self, grad):
        full = np.zeros(self.shape, dtype=grad.dtype)
        full[..., self.start:self.stop] = grad
        return (full,)


class MatMul(Function):
    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul needs (n, k) @ (k, m), got {a.shape} @ {b.shape}")
        self.a, self.b = a, b
        return a @ b

    def backward(self, grad):
        return grad @ self.b.T, self.a.T @ grad


class LogSoftmax(Function):
    def forward(self, a):
        self.out = _log_softmax(a, axis=-1).astype(a.dtype, copy=False)
        return self.out

    def backward(self, grad):
        return (grad - np.exp(self.out) * grad.sum(axis=-1, keepdims=True),)


def _padding_for(extent, kernel, stride, padding):
    if padding == 'valid':
        return 0, 0
    if padding == 'same':
        out = -(-extent // stride)
        total = max((out - 1) * stride + kernel - extent, 0)
        return total // 2, total - total // 2
    raise ValueError(f"Invalid padding '{padding}'. Choose 'same' or 'valid'.")


class Conv2d(Function):
    """Cross-correlation of an N x H x W x Cin input with a k x k x Cin x Cout kernel, by im2col."""

    def forward(self, x, kernel, bias, stride, padding):
        if x.ndim != 4 or kernel.ndim != 4:
            raise ShapeError(f"conv2d needs NHWC input and k x k x Cin x Cout kernel, got {x.shape}, {kernel.shape}")
        if stride < 1:
            raise ShapeError(f"conv2d stride must be >= 1, got {stride}")
        n, h, w, channels = x.shape
        kh, kw, cin, cout = kernel.shape
        if channels != cin:
            raise ShapeError(f"conv2d input has {channels} channels but kernel expects {cin}")
        if bias is not None and bias.shape != (cout,):
            raise ShapeError(f"conv2d bias shape {bias.shape} does not match {cout} filters")

        top, bottom = _padding_for(h, kh, stride, padding)
        left, right = _padding_for(w, kw, stride, padding)
        if top or bottom or left or right:
            xp = np.pad(x, ((0, 0), (top, bottom), (left, right), (0, 0)))
        else:
            xp = x
        if xp.shape[1] < kh or xp.shape[2] < kw:
            raise ShapeError(f"conv2d input {x.shape} is smaller than kernel {kernel.shape[:2]} after padding")

        out_h = (xp.shape[1] - kh) // stride + 1
        out_w = (xp.shape[2] - kw) // stride + 1
        if kh == 1 and kw == 1:
            cols = xp[:, ::stride, ::stride, :][:, :out_h, :out_w, :].reshape(-1, cin)
        else:
            windows = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
            cols = windows.transpose(0, 1, 2, 4, 5, 3).reshape(n * out_h * out_w, kh * kw * cin)
        weights = kernel.reshape(kh * kw * cin, cout)
        out = cols @ weights
        if bias is not None:
            out += bias

        if self.needs_grad:
            self.cols, self.weights = cols, weights
            self.geometry = (x.shape, xp.shape, kernel.shape, stride, top, left, out_h, out_w)
            self.has_bias = bias is not None
        return out.reshape(n, out_h, out_w, cout)

    def backward(self, grad):
        x_shape, xp_shape, k_shape, stride, top, left, out_h, out_w = self.geometry
        n, h, w, cin = x_shape
        kh, kw, _, cout = k_shape
        grad2d = grad.reshape(-1, cout)

        grad_kernel = (self.cols.T @ grad2d).reshape(k_shape)
        grad_bias = grad2d.sum(axis=0) if self.has_bias else None

        grad_cols = (grad2d @ self.weights.T).reshape(n, out_h, out_w, kh, kw, cin)
        grad_xp = np.zeros(xp_shape, dtype=grad.dtype)
        for i in range(kh):
            for j in range(kw):
                grad_xp[:, i:i + stride * (out_h - 1) + 1:stride, j:j + stride * (out_w - 1) + 1:stride, :] += \
                    grad_cols[:, :, :, i, j, :]
        grad_x = np.ascontiguousarray(grad_xp[:, top:top + h, left:left + w, :])
        return grad_x, grad_kernel, grad_bias


class MaxPool2(Function):
    """2 x 2 window, stride 2. Gradient goes to the first maximal position of each window."""

    def forward(self, x):
        n, h, w, c = x.shape
        if h % 2 or w % 2:
            raise ShapeError(f"maxpool2 needs even spatial extents, got {h} x {w}")
        windows = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, h // 2, w // 2, c, 4)
        argmax = windows.argmax(axis=-1)
        if self.needs_grad:
            self.argmax, self.shape = argmax, x.shape
        return np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        n, h, w, c = self.shape
        routed = np.zeros((n, h // 2, w // 2, c, 4), dtype=grad.dtype)
        np.put_along_axis(routed, self.argmax[..., None], grad[..., None], axis=-1)
        return (routed.reshape(n, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(n, h, w, c),)


class BatchNorm(Function):
    def forward(self, x, gamma, beta, running_mean, running_var, training, momentum, eps):
        channels = x.shape[-1]
        if gamma.shape != (channels,) or beta.shape != (channels,):
            raise ShapeError(f"batch_norm parameters {gamma.shape}/{beta.shape} do not match {channels} channels")
        axes = tuple(range(x.ndim - 1))
        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            count = x.size // channels
            unbiased = var * count / (count - 1) if count > 1 else var
            running_mean *= momentum
            running_mean += (1 - momentum) * mean
            running_var *= momentum
            running_var += (1 - momentum) * unbiased
        else:
            mean, var = running_mean, running_var
        inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype, copy=False)
        x_hat = (x - mean) * inv_std
        if self.needs_grad:
            self.x_hat, self.inv_std, self.gamma = x_hat, inv_std, gamma
            self.training, self.axes = training, axes
        return (x_hat * gamma + beta).astype(x.dtype, copy=False)

    def backward(self, grad):
        axes = self.axes
        grad_gamma = (grad * self.x_hat).sum(axis=axes)
        grad_beta = grad.sum(axis=axes)
        grad_x_hat = grad * self.gamma
        if self.training:
            count = grad.size // grad.shape[-1]
            grad_x = (self.inv_std / count) * (
                count * grad_x_hat
                - grad_x_hat.sum(axis=axes)
                - self.x_hat * (grad_x_hat * self.x_hat).sum(axis=axes))
        else:
            grad_x = grad_x_hat * self.inv_std
        return grad_x, grad_gamma, grad_beta


class ConcatChannels(Function):
    def forward(self, a, b):
        if a.shape[:-1] != b.shape[:-1]:
            raise ShapeError(f"concat_channels needs equal spatial extents, got {a.shape} and {b.shape}")
        self.split = a.shape[-1]
        return np.concatenate([a, b], axis=-1)

    def backward(self, grad):
        return np.ascontiguousarray(grad[..., :self.split]), np.ascontiguousarray(grad[..., self.split:])


def _space_to_depth(x, block):
    n, h, w, c = x.shape
    if h % block or w % block:
        raise ShapeError(f"space_to_depth block {block} does not divide {h} x {w}")
    return (x.reshape(n, h // block, block, w // block, block, c)
             .transpose(0, 1, 3, 2, 4, 5)
             .reshape(n, h // block, w // block, block * block * c))


def _depth_to_space(x, block):
    n, h, w, c = x.shape
    if c % (block * block):
        raise ShapeError(f"depth_to_space block {block} does not divide {c} channels")
    depth = c // (block * block)
    return (x.reshape(n, h, w, block, block, depth)
             .transpose(0, 1, 3, 2, 4, 5)
             .reshape(n, h * block, w * block, depth))


class SpaceToDepth(Function):
    def forward(self, x, block):
        self.block = block
        return np.ascontiguousarray(_space_to_depth(x, block))

    def backward(self, grad):
        return (np.ascontiguousarray(_depth_to_space(grad, self.block)),)


class DepthToSpace(Function):
    def forward(self, x, block):
        self.block = block
        return np.ascontiguousarray(_depth_to_space(x, block))

    def backward(self, grad):
        return (np.ascontiguousarray(_space_to_depth(grad, self.block)),)


def _spatial(fn):
    """Let an NHWC operation also take a single H x W x C tensor."""
    def wrapper(x, *args, **kwargs):
        x = as_tensor(x)
        if x.ndim == 3:
            out = fn(reshape(x, (1,) + x.shape), *args, **kwargs)
            return reshape(out, out.shape[1:])
        if x.ndim != 4:
            raise ShapeError(f"{fn.__name__} needs H x W x C or N x H x W x C input, got shape {x.shape}")
        return fn(x, *args, **kwargs)
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def add(a, b):
    return Add.apply(a, b)


def sub(a, b):
    return Sub.apply(a, b)


def mul(a, b):
    return Mul.apply(a, b)


def div(a, b):
    return Div.apply(a, b)


def neg(a):
    return Neg.apply(a)


def power(a, exponent):
    return Power.apply(a, exponent=float(exponent))


def exp(a):
    return Exp.apply(a)


def log(a):
    return Log.apply(a)


def sigmoid(a):
    return Sigmoid.apply(a)


def tanh(a):
    return Tanh.apply(a)


def softplus(a):
    return Softplus.apply(a)


def leaky_relu(a, slope=0.1):
    return LeakyReLU.apply(a, slope=slope)


def sum_(a, axis=None, keepdims=False):
    return Sum.apply(a, axis=axis, keepdims=keepdims)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return div(sum_(a, axis=axis, keepdims=keepdims), float(count))


def reshape(a, shape):
    return Reshape.apply(a, shape=tuple(shape))


def slice_last(a, start, stop):
    """Slice the last axis: a[..., start:stop]."""
    return SliceLast.apply(a, start=start, stop=stop)


def matmul(a, b):
    return MatMul.apply(a, b)


def log_softmax(a):
    """Log-softmax over the last axis."""
    return LogSoftmax.apply(a)


@_spatial
def conv2d(x, kernel, bias=None, stride=1, padding='same'):
    return Conv2d.apply(x, kernel, bias, stride=stride, padding=padding)


@_spatial
def maxpool2(x):
    return MaxPool2.apply(x)


def batch_norm(x, gamma, beta, running_mean, running_var, training=True, momentum=0.99, eps=1e-5):
    """
    Normalize each channel (last axis).

    Training mode uses the batch statistics and folds them into the running
    buffers in place; inference mode uses the running buffers.
    """
    return BatchNorm.apply(x, gamma, beta, running_mean=running_mean, running_var=running_var,
                           training=training, momentum=momentum, eps=eps)


@_spatial
def concat_channels(a, b):
    b = as_tensor(b)
    if b.ndim == 3:
        b = reshape(b, (1,) + b.shape)
    return ConcatChannels.apply(a, b)


@_spatial
def space_to_depth(x, block=2):
    return SpaceToDepth.apply(x, block=block)


@_spatial
def depth_to_space(x, block=2):
    return DepthToSpace.apply(x, block=block)


__all__ = [
    'Tensor', 'add', 'sub', 'mul', 'div', 'neg', 'power', 'exp', 'log', 'sigmoid', 'tanh',
    'softplus', 'leaky_relu', 'sum_', 'mean', 'reshape', 'slice_last', 'matmul', 'log_softmax',
    'conv2d', 'maxpool2', 'batch_norm', 'concat_channels', 'space_to_depth', 'depth_to_space',
]
