"""
Parameter initialization, dropout and the AdaDelta optimizer.

AdaDelta keeps two decayed accumulators per parameter:
    E[g^2]  <- rho * E[g^2]  + (1 - rho) * g^2
    delta   =  -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
    E[dx^2] <- rho * E[dx^2] + (1 - rho) * delta^2
and applies `x += delta` in place. There is no learning rate.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence

import numpy as np

from app.services.autodiff.tensor import DTYPE, Node, ShapeError, Tensor, mul

logger = logging.getLogger(__name__)


def xavier_init(shape: Sequence[int], rng_seed) -> Tensor:
    """
    Uniform Xavier initialization on +-sqrt(6 / (fan_in + fan_out)).

    For a matrix of shape (rows, cols), fan_out is rows and fan_in is cols;
    a vector of length k is treated as k inputs feeding one output.
    """
    shape = tuple(int(s) for s in shape)
    if not shape or any(s < 1 for s in shape):
        raise ShapeError(f"Invalid parameter shape {shape}")
    if len(shape) == 1:
        fan_in, fan_out = shape[0], 1
    else:
        fan_out, fan_in = shape[0], int(np.prod(shape[1:]))
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    return rng.uniform(-limit, limit, size=shape).astype(DTYPE)


def dropout(x, keep_prob: float, training: bool, rng: Optional[np.random.Generator]) -> Node:
    """Inverted dropout: kept units are scaled by 1/keep_prob at train time."""
    if not 0.0 < keep_prob <= 1.0:
        raise ValueError(f"keep_prob must be in (0, 1], got {keep_prob}")
    if not training or keep_prob == 1.0:
        return x if isinstance(x, Node) else Node(x)
    if rng is None:
        raise ValueError("dropout in training mode needs a random generator")
    shape = x.shape
    mask = (rng.random(shape) < keep_prob).astype(DTYPE) / keep_prob
    return mul(x, mask)


@dataclass
class AdaDeltaState:
    """Decayed accumulators of squared gradients and squared updates."""
    rho: float = 0.95
    epsilon: float = 1e-6
    acc_grad_sq: Dict[str, Tensor] = field(default_factory=dict)
    acc_update_sq: Dict[str, Tensor] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must be in (0, 1), got {self.rho}")
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


def adadelta_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, Tensor],
    state: AdaDeltaState,
) -> AdaDeltaState:
    """Apply one AdaDelta update to every parameter array in place."""
    missing = set(params) ^ set(grads)
    if missing:
        raise ShapeError(f"Parameters and gradients disagree on names: {sorted(missing)}")

    rho, eps = state.rho, state.epsilon
    for name, value in params.items():
        grad = grads[name]
        if grad.shape != value.shape:
            raise ShapeError(
                f"Gradient shape {grad.shape} does not match parameter '{name}' shape {value.shape}"
            )
        acc_g = state.acc_grad_sq.setdefault(name, np.zeros_like(value))
        acc_u = state.acc_update_sq.setdefault(name, np.zeros_like(value))
        if acc_g.shape != value.shape:
            raise ShapeError(
                f"Accumulator shape {acc_g.shape} does not match parameter '{name}' shape {value.shape}"
            )

        acc_g *= rho
        acc_g += (1.0 - rho) * grad * grad
        update = -np.sqrt(acc_u + eps) / np.sqrt(acc_g + eps) * grad
        acc_u *= rho
        acc_u += (1.0 - rho) * update * update
        value += update

    return state


class AdaDelta:
    """Optimizer over a fixed, named set of parameter nodes."""

    def __init__(self, parameters: Mapping[str, Node], rho: float = 0.95, epsilon: float = 1e-6):
        self.parameters = dict(parameters)
        self.state = AdaDeltaState(rho=rho, epsilon=epsilon)

    def step(self):
        grads = {
            name: node.grad if node.grad is not None else np.zeros_like(node.value)
            for name, node in self.parameters.items()
        }
        adadelta_step({name: node.value for name, node in self.parameters.items()}, grads, self.state)

    def zero_grad(self):
        for node in self.parameters.values():
            node.zero_grad()
