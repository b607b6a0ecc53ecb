import numpy as np
import pytest

from honeyscope.detector.loss import LOSS_CASES
from honeyscope.tensor import ops
from honeyscope.tensor.gradcheck import OP_CASES, check_gradients, check_op, relative_error, run_suite

TOLERANCE = 1e-4


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_op_gradients(name):
    assert check_op(name, trials=3, seed=0) <= TOLERANCE


@pytest.mark.slow
@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_op_gradients_full(name):
    assert check_op(name, trials=20, seed=1) <= TOLERANCE


def test_yolo_loss_gradients():
    assert check_op('yolo_loss', trials=3, seed=0, cases=LOSS_CASES, max_entries=50) <= TOLERANCE


@pytest.mark.slow
def test_detector_loss_gradients():
    assert check_op('detector_loss', trials=2, seed=0, cases=LOSS_CASES, max_entries=50) <= TOLERANCE


def test_relative_error_floor():
    assert relative_error(np.array([0.0]), np.array([1e-6])) == pytest.approx(1e-3)


def test_detects_wrong_gradient():
    def fn(x):
        # detach drops half of the product rule
        return (x * x.detach()).sum()
    assert check_gradients(fn, [np.array([1.0, 2.0])]) > 0.1


def test_square_passes():
    assert check_gradients(lambda x: ops.sum_(x * x), [np.array([0.5, -1.5, 3.0])]) < 1e-6


def test_suite_subset():
    results = run_suite(trials=1, names=['tanh', 'sigmoid'])
    assert set(results) == {'tanh', 'sigmoid'}


def test_unknown_check():
    with pytest.raises(ValueError):
        check_op('no_such_op')
