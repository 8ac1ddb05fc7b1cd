"""Adam/AdamW over named numpy parameter blocks, plus global-norm clipping."""

from typing import Dict, Mapping, MutableMapping, Tuple

import numpy as np

from .exceptions import ParameterValidationError

Params = MutableMapping[str, np.ndarray]
Grads = Mapping[str, np.ndarray]


class Adam:
    """Adam with bias correction; parameters are updated in place"""

    def __init__(self, params: Params, lr: float = 1e-3, betas: Tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.0):
        if lr <= 0:
            raise ParameterValidationError(f"Learning rate must be positive, got {lr}")
        if not all(0.0 <= beta < 1.0 for beta in betas):
            raise ParameterValidationError(f"Betas must lie in [0, 1), got {betas}")
        if weight_decay < 0:
            raise ParameterValidationError(f"Weight decay must be non-negative, got {weight_decay}")
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m: Dict[str, np.ndarray] = {name: np.zeros_like(p) for name, p in params.items()}
        self.v: Dict[str, np.ndarray] = {name: np.zeros_like(p) for name, p in params.items()}

    def _decay(self, name: str) -> None:
        pass

    def _effective_grad(self, name: str, grad: np.ndarray) -> np.ndarray:
        return grad + self.weight_decay * self.params[name] if self.weight_decay else grad

    def step(self, grads: Grads) -> None:
        self.t += 1
        beta1, beta2 = self.betas
        correction1 = 1.0 - beta1 ** self.t
        correction2 = 1.0 - beta2 ** self.t
        for name, param in self.params.items():
            if name not in grads:
                continue
            grad = self._effective_grad(name, np.asarray(grads[name], dtype=np.float64))
            self._decay(name)
            self.m[name] = beta1 * self.m[name] + (1.0 - beta1) * grad
            self.v[name] = beta2 * self.v[name] + (1.0 - beta2) * grad * grad
            m_hat = self.m[name] / correction1
            v_hat = self.v[name] / correction2
            param -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class AdamW(Adam):
    """Adam with decoupled weight decay: p <- p * (1 - lr * wd) before the moment update"""

    def _effective_grad(self, name: str, grad: np.ndarray) -> np.ndarray:
        return grad

    def _decay(self, name: str) -> None:
        if self.weight_decay:
            self.params[name] *= 1.0 - self.lr * self.weight_decay


def global_norm(grads: Grads) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_grad_norm(grads: Grads, max_norm: float) -> Tuple[Dict[str, np.ndarray], float]:
    """
    Scale all gradients by min(1, max_norm / (norm + 1e-6)).

    Returns the clipped gradients and the pre-clipping global L2 norm.
    """
    if max_norm <= 0:
        raise ParameterValidationError(f"max_norm must be positive, got {max_norm}")
    norm = global_norm(grads)
    coefficient = min(1.0, max_norm / (norm + 1e-6))
    return {name: g * coefficient for name, g in grads.items()}, norm
