"""
Parameter update rules. Each rule owns its moment accumulators, sized to the
parameter vector on first use, and advances them once per `apply`.
"""
from typing import Dict, Optional
import logging

import numpy as np

from core.errors import DimensionError, NumericError

logger = logging.getLogger(__name__)


class UpdateRule:
    kind = 'base'

    def __init__(self, lr: float):
        self.lr = lr
        self.iterations = 0
        self.state: Dict[str, np.ndarray] = {}

    def _ensure_state(self, size: int, *names: str):
        for name in names:
            if name not in self.state:
                self.state[name] = np.zeros(size, dtype=np.float64)
            elif self.state[name].shape != (size,):
                raise DimensionError(
                    f"{self.kind} state '{name}' has {self.state[name].shape[0]} entries, "
                    f"parameters have {size}")

    def apply(self, params: np.ndarray, grad: np.ndarray, iteration: Optional[int] = None) -> np.ndarray:
        """Return the updated parameters; `params` itself is not modified"""
        params = np.asarray(params, dtype=np.float64)
        grad = np.asarray(grad, dtype=np.float64)
        if params.shape != grad.shape:
            raise DimensionError(f"Gradient shape {grad.shape} != parameter shape {params.shape}")
        if not np.all(np.isfinite(grad)):
            raise NumericError("Combined gradient is not finite", iteration)

        self.iterations += 1
        return params + self._delta(grad)

    def _delta(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hyperparameters(self) -> dict:
        return {'lr': self.lr}


class SGD(UpdateRule):
    kind = 'sgd'

    def __init__(self, lr: float = 0.05):
        super().__init__(lr)

    def _delta(self, grad):
        return -self.lr * grad


class Adam(UpdateRule):
    kind = 'adam'

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def _delta(self, grad):
        self._ensure_state(grad.shape[0], 'm', 'v')
        m = self.state['m'] = self.beta1 * self.state['m'] + (1.0 - self.beta1) * grad
        v = self.state['v'] = self.beta2 * self.state['v'] + (1.0 - self.beta2) * grad * grad
        # bias correction
        m_hat = m / (1.0 - self.beta1 ** self.iterations)
        v_hat = v / (1.0 - self.beta2 ** self.iterations)
        return -self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def hyperparameters(self):
        return {'lr': self.lr, 'beta1': self.beta1, 'beta2': self.beta2, 'eps': self.eps}


class RMSprop(UpdateRule):
    kind = 'rmsprop'

    def __init__(self, lr: float = 1e-3, decay: float = 0.9, eps: float = 1e-8):
        super().__init__(lr)
        self.decay = decay
        self.eps = eps

    def _delta(self, grad):
        self._ensure_state(grad.shape[0], 'mean_square')
        ms = self.state['mean_square'] = self.decay * self.state['mean_square'] + (1.0 - self.decay) * grad * grad
        return -self.lr * grad / (np.sqrt(ms) + self.eps)

    def hyperparameters(self):
        return {'lr': self.lr, 'decay': self.decay, 'eps': self.eps}


class Adadelta(UpdateRule):
    """Unit-corrected update; `lr` scales the step and is 1.0 in the original rule"""
    kind = 'adadelta'

    def __init__(self, lr: float = 1.0, decay: float = 0.95, eps: float = 1e-6):
        super().__init__(lr)
        self.decay = decay
        self.eps = eps

    def _delta(self, grad):
        self._ensure_state(grad.shape[0], 'grad_sq', 'delta_sq')
        rho = self.decay
        grad_sq = self.state['grad_sq'] = rho * self.state['grad_sq'] + (1.0 - rho) * grad * grad
        delta = -np.sqrt(self.state['delta_sq'] + self.eps) / np.sqrt(grad_sq + self.eps) * grad
        self.state['delta_sq'] = rho * self.state['delta_sq'] + (1.0 - rho) * delta * delta
        return self.lr * delta

    def hyperparameters(self):
        return {'lr': self.lr, 'decay': self.decay, 'eps': self.eps}


UPDATE_RULES = {rule.kind: rule for rule in (SGD, Adam, RMSprop, Adadelta)}


def make_update_rule(kind: str, **hyperparameters) -> UpdateRule:
    """Build a fresh rule with empty state"""
    if kind not in UPDATE_RULES:
        raise ValueError(f"Unknown update rule '{kind}', expected one of {sorted(UPDATE_RULES)}")
    return UPDATE_RULES[kind](**hyperparameters)


def step(rule: UpdateRule, params: np.ndarray, combined: np.ndarray,
         iteration: Optional[int] = None) -> np.ndarray:
    return rule.apply(params, combined, iteration)
