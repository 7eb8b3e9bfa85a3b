"""
BCE loss and the AdamW optimizer.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from constants import BCE_CLAMP_EPS, DEFAULT_ADAM_EPS, DEFAULT_BETAS, DEFAULT_LEARNING_RATE, DEFAULT_WEIGHT_DECAY
from core.tensor import Tensor, as_tensor
from errors import ContractError, DimensionError, NumericError

logger = logging.getLogger(__name__)


def bce_loss(probs: Tensor, targets: np.ndarray, eps: float = BCE_CLAMP_EPS) -> Tensor:
    """
    Mean binary cross-entropy over batch and classes.

    Probabilities are clamped to [eps, 1 - eps] before the logs.
    """
    probs = as_tensor(probs)
    targets = np.asarray(targets, dtype=np.float64)
    if probs.shape != targets.shape:
        raise DimensionError(f"bce_loss: probs {probs.shape} and targets {targets.shape} differ")
    p = probs.clip(eps, 1.0 - eps)
    y = Tensor(targets)
    return -(y * p.log() + (1.0 - y) * (1.0 - p).log()).mean()


@dataclass
class OptimizerState:
    """Adam moments for trainable parameters only."""
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: Dict[str, Tensor]) -> "OptimizerState":
        trainable = {k: p for k, p in params.items() if p.requires_grad}
        return cls(m={k: np.zeros(p.shape) for k, p in trainable.items()},
                   v={k: np.zeros(p.shape) for k, p in trainable.items()})


def adamw_step(params: Dict[str, Tensor], grads: Dict[str, np.ndarray], state: OptimizerState,
               lr: float = DEFAULT_LEARNING_RATE, weight_decay: float = DEFAULT_WEIGHT_DECAY,
               betas: Tuple[float, float] = DEFAULT_BETAS, eps: float = DEFAULT_ADAM_EPS) -> OptimizerState:
    """
    One AdamW update of the parameters that have optimizer state.

    The bias-corrected Adam step is applied first, then decoupled decay
    p <- p - lr * wd * p. Parameters without state (frozen) are not touched.

    Raises:
        ContractError: If a trainable parameter has no gradient
        NumericError: If any gradient is non-finite (nothing is updated)
    """
    for key in state.m:
        if key not in grads:
            raise ContractError(f"no gradient for trainable parameter {key!r}")
        if not np.all(np.isfinite(grads[key])):
            raise NumericError(f"non-finite gradient for {key!r}; step aborted")

    beta1, beta2 = betas
    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for key in state.m:
        param, grad = params[key], grads[key]
        state.m[key] = beta1 * state.m[key] + (1.0 - beta1) * grad
        state.v[key] = beta2 * state.v[key] + (1.0 - beta2) * grad * grad
        m_hat = state.m[key] / correction1
        v_hat = state.v[key] / correction2
        updated = param.data - lr * m_hat / (np.sqrt(v_hat) + eps)
        param.assign(updated - lr * weight_decay * updated)
    return state


class AdamW:
    """Stateful wrapper over adamw_step for a fixed parameter map."""

    def __init__(self, params: Dict[str, Tensor], lr: float = DEFAULT_LEARNING_RATE,
                 weight_decay: float = DEFAULT_WEIGHT_DECAY, betas: Tuple[float, float] = DEFAULT_BETAS,
                 eps: float = DEFAULT_ADAM_EPS):
        self.params = {k: p for k, p in params.items() if p.requires_grad}
        self.lr, self.weight_decay, self.betas, self.eps = lr, weight_decay, tuple(betas), eps
        self.state = OptimizerState.for_params(self.params)

    def step(self, grads: Optional[Dict[str, np.ndarray]] = None) -> None:
        if grads is None:
            grads = {k: p.grad if p.grad is not None else np.zeros(p.shape) for k, p in self.params.items()}
        adamw_step(self.params, grads, self.state, self.lr, self.weight_decay, self.betas, self.eps)

    def zero_grad(self) -> None:
        for param in self.params.values():
            param.zero_grad()
