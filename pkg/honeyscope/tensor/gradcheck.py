"""
Finite-difference gradient checks.

Each check builds a scalar function of one or more arrays, differentiates it
analytically in 64-bit mode, and compares against central differences.
"""

import logging

import numpy as np

from honeyscope.tensor import ops
from honeyscope.tensor.autograd import Tensor, no_grad, precision

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-4
RELATIVE_FLOOR = 1e-3


def relative_error(analytic, numeric, floor=RELATIVE_FLOOR):
    return float(np.max(np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)))


def check_gradients(fn, arrays, eps=DEFAULT_EPS, max_entries=None, rng=None):
    """
    Compare analytic and central-difference gradients of fn.

    Args:
        fn: Callable taking Tensors and returning a scalar Tensor
        arrays: Input arrays; every one is differentiated
        eps: Central-difference perturbation
        max_entries: Check at most this many randomly chosen entries per input
        rng: numpy Generator used to pick entries

    Returns:
        float: Maximum relative error over all checked entries
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    with precision('float64'):
        arrays = [np.array(a, dtype=np.float64) for a in arrays]
        tensors = [Tensor(a, requires_grad=True) for a in arrays]
        fn(*tensors).backward()
        worst = 0.0
        for position, array in enumerate(arrays):
            analytic = tensors[position].grad
            flat_indices = np.arange(array.size)
            if max_entries is not None and array.size > max_entries:
                flat_indices = rng.choice(array.size, size=max_entries, replace=False)
            numeric = np.empty(len(flat_indices))
            for k, flat in enumerate(flat_indices):
                index = np.unravel_index(flat, array.shape)
                original = array[index]
                array[index] = original + eps
                upper = _evaluate(fn, arrays)
                array[index] = original - eps
                lower = _evaluate(fn, arrays)
                array[index] = original
                numeric[k] = (upper - lower) / (2 * eps)
            picked = analytic.reshape(-1)[flat_indices]
            worst = max(worst, relative_error(picked, numeric))
    return worst


def _evaluate(fn, arrays):
    with no_grad():
        return fn(*[Tensor(a) for a in arrays]).item()


def _away_from_zero(rng, shape):
    values = rng.normal(size=shape)
    return np.sign(values) * (0.1 + np.abs(values))


def _projected(op):
    """Wrap an op as sum(op(...) * R) with a fixed random projection R."""
    cache = {}

    def fn(*tensors):
        out = op(*tensors)
        if 'r' not in cache:
            cache['r'] = np.random.default_rng(1234).normal(size=out.shape)
        return (out * cache['r']).sum()
    return fn


def _case_conv2d_same(rng):
    x = rng.normal(size=(2, 5, 6, 3))
    k = rng.normal(size=(3, 3, 3, 4))
    b = rng.normal(size=(4,))
    return _projected(lambda x, k, b: ops.conv2d(x, k, b, stride=1, padding='same')), [x, k, b]


def _case_conv2d_strided(rng):
    x = rng.normal(size=(1, 7, 7, 2))
    k = rng.normal(size=(3, 3, 2, 3))
    b = rng.normal(size=(3,))
    return _projected(lambda x, k, b: ops.conv2d(x, k, b, stride=2, padding='valid')), [x, k, b]


def _case_conv2d_pointwise(rng):
    x = rng.normal(size=(2, 4, 4, 5))
    k = rng.normal(size=(1, 1, 5, 3))
    b = rng.normal(size=(3,))
    return _projected(lambda x, k, b: ops.conv2d(x, k, b)), [x, k, b]


def _case_maxpool2(rng):
    # distinct values keep every window's argmax away from ties
    x = rng.permutation(2 * 4 * 6 * 3).reshape(2, 4, 6, 3) * 0.01
    return _projected(ops.maxpool2), [x]


def _case_leaky_relu(rng):
    return _projected(lambda x: ops.leaky_relu(x, 0.1)), [_away_from_zero(rng, (3, 4, 5))]


def _case_batch_norm_train(rng):
    x = rng.normal(size=(2, 3, 3, 4))
    gamma = rng.normal(size=(4,))
    beta = rng.normal(size=(4,))
    running_mean, running_var = np.zeros(4), np.ones(4)
    op = lambda x, g, b: ops.batch_norm(x, g, b, running_mean, running_var, training=True)
    return _projected(op), [x, gamma, beta]


def _case_batch_norm_infer(rng):
    x = rng.normal(size=(2, 3, 3, 4))
    gamma = rng.normal(size=(4,))
    beta = rng.normal(size=(4,))
    running_mean, running_var = rng.normal(size=4), rng.uniform(0.5, 2.0, size=4)
    op = lambda x, g, b: ops.batch_norm(x, g, b, running_mean, running_var, training=False)
    return _projected(op), [x, gamma, beta]


def _case_concat_channels(rng):
    return _projected(ops.concat_channels), [rng.normal(size=(3, 3, 2)), rng.normal(size=(3, 3, 4))]


def _case_space_to_depth(rng):
    return _projected(lambda x: ops.space_to_depth(x, 2)), [rng.normal(size=(4, 6, 3))]


def _case_depth_to_space(rng):
    return _projected(lambda x: ops.depth_to_space(x, 2)), [rng.normal(size=(2, 3, 8))]


def _case_sigmoid(rng):
    return _projected(ops.sigmoid), [rng.normal(size=(4, 5)) * 3]


def _case_tanh(rng):
    return _projected(ops.tanh), [rng.normal(size=(4, 5))]


def _case_softplus(rng):
    return _projected(ops.softplus), [rng.normal(size=(4, 5)) * 3]


def _case_log_softmax(rng):
    return _projected(ops.log_softmax), [rng.normal(size=(3, 4, 5))]


def _case_exp_log(rng):
    return _projected(lambda x: ops.log(ops.exp(x) + 1.0)), [rng.normal(size=(6,))]


def _case_matmul(rng):
    return _projected(ops.matmul), [rng.normal(size=(3, 4)), rng.normal(size=(4, 2))]


def _case_broadcast_arithmetic(rng):
    a = rng.normal(size=(3, 4))
    b = rng.uniform(0.5, 2.0, size=(4,))
    return _projected(lambda a, b: (a * b - a / b) ** 2), [a, b]


def _case_slice_reshape(rng):
    op = lambda x: ops.slice_last(ops.reshape(x, (2, 3, 5)), 1, 4).mean(axis=1)
    return _projected(op), [rng.normal(size=(6, 5))]


OP_CASES = {
    'conv2d_same': _case_conv2d_same,
    'conv2d_strided': _case_conv2d_strided,
    'conv2d_pointwise': _case_conv2d_pointwise,
    'maxpool2': _case_maxpool2,
    'leaky_relu': _case_leaky_relu,
    'batch_norm_train': _case_batch_norm_train,
    'batch_norm_infer': _case_batch_norm_infer,
    'concat_channels': _case_concat_channels,
    'space_to_depth': _case_space_to_depth,
    'depth_to_space': _case_depth_to_space,
    'sigmoid': _case_sigmoid,
    'tanh': _case_tanh,
    'softplus': _case_softplus,
    'log_softmax': _case_log_softmax,
    'exp_log': _case_exp_log,
    'matmul': _case_matmul,
    'broadcast_arithmetic': _case_broadcast_arithmetic,
    'slice_reshape': _case_slice_reshape,
}


def check_op(name, trials=20, seed=0, eps=DEFAULT_EPS, cases=None, max_entries=None):
    """
    Worst relative error of one check over `trials` random cases.

    A case factory takes a numpy Generator and returns (scalar fn, input arrays).
    """
    cases = OP_CASES if cases is None else cases
    if name not in cases:
        raise ValueError(f"No gradient check named '{name}'. Available checks: {list(cases)}")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        with precision('float64'):
            fn, arrays = cases[name](rng)
        worst = max(worst, check_gradients(fn, arrays, eps=eps, max_entries=max_entries, rng=rng))
    return worst


def run_suite(trials=20, seed=0, names=None, cases=None, max_entries=None):
    """Run every check in `cases` (the op checks by default); returns {name: max relative error}."""
    cases = OP_CASES if cases is None else cases
    results = {}
    for name in names or cases:
        results[name] = check_op(name, trials=trials, seed=seed, cases=cases, max_entries=max_entries)
        logger.info(f"grad-check {name}: max relative error {results[name]:.3e}")
    return results
