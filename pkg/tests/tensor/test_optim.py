import numpy as np
import pytest

from honeyscope.errors import NonFiniteError
from honeyscope.tensor.autograd import Tensor
from honeyscope.tensor.optim import SGD, Adam, get_optimizer


def test_zero_gradient_leaves_parameter():
    p = Tensor([1.5, -2.0], requires_grad=True)
    p.grad = np.zeros(2, dtype=np.float32)
    SGD([p], lr=0.1, momentum=0.0).step()
    assert p.data.tolist() == [1.5, -2.0]


def test_plain_sgd_step():
    p = Tensor([0.0], requires_grad=True)
    p.grad = np.ones(1, dtype=np.float32)
    SGD([p], lr=0.1, momentum=0.0).step()
    assert p.data[0] == pytest.approx(-0.1)


def test_parameter_without_grad_is_skipped():
    p = Tensor([3.0], requires_grad=True)
    q = Tensor([1.0], requires_grad=True)
    q.grad = np.ones(1, dtype=np.float32)
    SGD([p, q], lr=0.5, momentum=0.0).step()
    assert p.data[0] == 3.0
    assert q.data[0] == pytest.approx(0.5)


@pytest.mark.parametrize("optimizer", [SGD, Adam])
def test_quadratic_bowl_decreases(optimizer):
    p = Tensor([2.0, -3.0], requires_grad=True)
    opt = optimizer([p], lr=0.05)
    losses = []
    for _ in range(50):
        opt.zero_grad()
        loss = (p * p).sum()
        loss.backward()
        opt.step()
        losses.append(loss.item())
    assert losses[-1] < losses[0]
    assert float((p.data ** 2).sum()) < losses[0]


def test_plain_sgd_monotone_on_bowl():
    p = Tensor([2.0, -3.0], requires_grad=True)
    opt = SGD([p], lr=0.1, momentum=0.0)
    losses = []
    for _ in range(20):
        opt.zero_grad()
        loss = (p * p).sum()
        loss.backward()
        opt.step()
        losses.append(loss.item())
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_nan_gradient_raises_before_update():
    p = Tensor([1.0, 2.0], requires_grad=True)
    p.grad = np.array([0.0, np.nan], dtype=np.float32)
    with pytest.raises(NonFiniteError) as info:
        SGD([p], lr=0.1).step()
    assert info.value.source == 'param[0]'
    assert p.data.tolist() == [1.0, 2.0]


def test_state_dict_counts_steps():
    p = Tensor([1.0], requires_grad=True)
    opt = Adam([p], lr=0.01)
    p.grad = np.ones(1, dtype=np.float32)
    opt.step()
    opt.step()
    state = opt.state_dict()
    assert state['name'] == 'adam'
    assert state['step'] == 2


def test_get_optimizer():
    assert get_optimizer('sgd') is SGD
    with pytest.raises(ValueError):
        get_optimizer('rmsprop')


def test_empty_parameter_list():
    with pytest.raises(ValueError):
        SGD([], lr=0.1)


def _bowl_steps(opt, p, n):
    for _ in range(n):
        opt.zero_grad()
        ((p * p).sum() + p.sum()).backward()
        opt.step()


@pytest.mark.parametrize("optimizer", [SGD, Adam])
def test_restored_state_continues_identically(optimizer):
    p = Tensor([2.0, -3.0, 0.5], requires_grad=True)
    straight = optimizer([p], lr=0.05)
    _bowl_steps(straight, p, 6)

    q = Tensor([2.0, -3.0, 0.5], requires_grad=True)
    interrupted = optimizer([q], lr=0.05)
    _bowl_steps(interrupted, q, 3)
    state = interrupted.state_dict()
    resumed = optimizer([q], lr=0.05)
    resumed.load_state_dict(state)
    assert resumed.state.step == 3
    _bowl_steps(resumed, q, 3)
    assert q.data.tolist() == p.data.tolist()


def test_state_dict_copies_moments():
    p = Tensor([1.0, 2.0], requires_grad=True)
    opt = Adam([p], lr=0.01)
    p.grad = np.ones(2, dtype=np.float32)
    opt.step()
    state = opt.state_dict()
    assert sorted(state['first_moments']) == [0]
    opt.step()
    assert not np.array_equal(state['first_moments'][0], opt.state.first_moments[0])


def test_load_state_dict_rejects_other_optimizer():
    p = Tensor([1.0], requires_grad=True)
    state = SGD([p], lr=0.1).state_dict()
    with pytest.raises(ValueError):
        Adam([p], lr=0.1).load_state_dict(state)


def test_load_state_dict_rejects_shape_mismatch():
    p = Tensor([1.0, 2.0], requires_grad=True)
    opt = Adam([p], lr=0.01)
    state = opt.state_dict()
    state['first_moments'] = {0: np.zeros(3, dtype=np.float32)}
    with pytest.raises(ValueError):
        opt.load_state_dict(state)
    assert opt.state.first_moments == {}


def test_load_state_dict_keeps_configured_lr():
    p = Tensor([1.0], requires_grad=True)
    state = Adam([p], lr=0.5).state_dict()
    opt = Adam([p], lr=0.01)
    opt.load_state_dict(state)
    assert opt.lr == 0.01
