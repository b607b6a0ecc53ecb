"""Gradient-descent optimizers over lists of Tensor parameters."""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from honeyscope.errors import NonFiniteError

logger = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    """Moment buffers (keyed by parameter index), step counter, learning rate and hyperparameters."""
    lr: float
    step: int = 0
    first_moments: Dict[int, np.ndarray] = field(default_factory=dict)
    second_moments: Dict[int, np.ndarray] = field(default_factory=dict)
    hyperparameters: Dict[str, float] = field(default_factory=dict)


class Optimizer(ABC):
    def __init__(self, params, lr, **hyperparameters):
        self.params = list(params)
        if not self.params:
            raise ValueError("Optimizer got an empty parameter list")
        self.state = OptimizerState(lr=float(lr), hyperparameters=dict(hyperparameters))

    @property
    def lr(self):
        return self.state.lr

    @lr.setter
    def lr(self, value):
        self.state.lr = float(value)

    def zero_grad(self):
        for param in self.params:
            param.grad = None

    def _check_grads(self):
        for index, param in enumerate(self.params):
            if param.grad is None:
                continue
            finite = np.isfinite(param.grad)
            if not finite.all():
                bad = int(finite.size - np.count_nonzero(finite))
                message = (f"Non-finite gradient at step {self.state.step + 1}: parameter {index} "
                           f"(shape {param.shape}) has {bad} NaN/Inf entries")
                logger.error(message)
                raise NonFiniteError(message, source=f"param[{index}]")

    def step(self):
        """Apply one update to every parameter that has a gradient."""
        self._check_grads()
        for index, param in enumerate(self.params):
            if param.grad is not None:
                self._update(index, param)
        self.state.step += 1

    @abstractmethod
    def _update(self, index, param):
        pass

    @property
    def name(self):
        return type(self).__name__.lower()

    def state_dict(self):
        return {
            'name': self.name,
            'lr': self.state.lr,
            'step': self.state.step,
            'hyperparameters': dict(self.state.hyperparameters),
            'first_moments': {index: m.copy() for index, m in self.state.first_moments.items()},
            'second_moments': {index: v.copy() for index, v in self.state.second_moments.items()},
        }

    def load_state_dict(self, state):
        """
        Restore the step counter, hyperparameters and moment buffers saved by state_dict.

        The learning rate stays as configured on this optimizer.

        Raises:
            ValueError: If the state belongs to another optimizer or does not fit the parameters
        """
        if state.get('name') != self.name:
            raise ValueError(f"Optimizer state is for '{state.get('name')}', not '{self.name}'")
        moments = {}
        for key in ('first_moments', 'second_moments'):
            moments[key] = {}
            for index, buffer in state.get(key, {}).items():
                index = int(index)
                if not 0 <= index < len(self.params):
                    raise ValueError(f"{key} entry for parameter {index}, optimizer has {len(self.params)}")
                param = self.params[index]
                if tuple(buffer.shape) != tuple(param.shape):
                    raise ValueError(f"{key} entry for parameter {index} has shape {tuple(buffer.shape)}, "
                                     f"parameter is {tuple(param.shape)}")
                moments[key][index] = np.array(buffer, dtype=param.dtype)
        self.state.step = int(state.get('step', 0))
        self.state.hyperparameters.update(state.get('hyperparameters', {}))
        self.state.first_moments = moments['first_moments']
        self.state.second_moments = moments['second_moments']


class SGD(Optimizer):
    """SGD with optional momentum; momentum=0 is the plain rule p -= lr * g."""

    def __init__(self, params, lr=1e-3, momentum=0.9, weight_decay=0.0):
        super().__init__(params, lr, momentum=momentum, weight_decay=weight_decay)

    def _update(self, index, param):
        hp = self.state.hyperparameters
        grad = param.grad
        if hp['weight_decay']:
            grad = grad + hp['weight_decay'] * param.data
        if hp['momentum']:
            velocity = self.state.first_moments.get(index)
            if velocity is None:
                velocity = np.zeros_like(param.data)
                self.state.first_moments[index] = velocity
            velocity *= hp['momentum']
            velocity += grad
            grad = velocity
        param.data -= (self.state.lr * grad).astype(param.dtype, copy=False)


class Adam(Optimizer):
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        super().__init__(params, lr, beta1=beta1, beta2=beta2, eps=eps, weight_decay=weight_decay)

    def _update(self, index, param):
        hp = self.state.hyperparameters
        grad = param.grad
        if hp['weight_decay']:
            grad = grad + hp['weight_decay'] * param.data
        m = self.state.first_moments.setdefault(index, np.zeros_like(param.data))
        v = self.state.second_moments.setdefault(index, np.zeros_like(param.data))
        m *= hp['beta1']
        m += (1 - hp['beta1']) * grad
        v *= hp['beta2']
        v += (1 - hp['beta2']) * grad * grad
        t = self.state.step + 1
        m_hat = m / (1 - hp['beta1'] ** t)
        v_hat = v / (1 - hp['beta2'] ** t)
        param.data -= (self.state.lr * m_hat / (np.sqrt(v_hat) + hp['eps'])).astype(param.dtype, copy=False)


OPTIMIZERS = {
    'sgd': SGD,
    'adam': Adam,
}

AVAILABLE_OPTIMIZERS = list(OPTIMIZERS)


def get_optimizer(name='adam'):
    """
    Get an optimizer class by name.

    Raises:
        ValueError: If the name is not registered
    """
    if name not in OPTIMIZERS:
        raise ValueError(f"Optimizer '{name}' not available. Available optimizers: {AVAILABLE_OPTIMIZERS}")
    return OPTIMIZERS[name]
