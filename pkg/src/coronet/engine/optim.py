"""First-order optimizers operating in place on parameter tensors."""
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def _named(params):
    if hasattr(params, "items"):
        return list(params.items())
    return [(str(i), p) for i, p in enumerate(params)]


def adam_step(params, state):
    """Apply one bias-corrected Adam update and zero the gradients.

    ``params`` is a mapping name -> Tensor (or a sequence of tensors).
    """
    named = _named(params)
    for name, p in named:
        if p.grad is None:
            raise ContractError(f"parameter {name!r} has no gradient")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    for name, p in named:
        g = p.grad
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        p.data -= state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
        p.grad = np.zeros_like(p.data)


def clip_grad_norm(params, max_norm):
    """Rescale all gradients so their joint L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    named = _named(params)
    total = float(np.sqrt(sum(float(np.sum(p.grad * p.grad)) for _, p in named
                              if p.grad is not None)))
    if total > max_norm > 0:
        factor = max_norm / total
        for _, p in named:
            if p.grad is not None:
                p.grad *= factor
    return total


def sgd_step(params, lr):
    named = _named(params)
    for name, p in named:
        if p.grad is None:
            raise ContractError(f"parameter {name!r} has no gradient")
    for _, p in named:
        p.data -= lr * p.grad
        p.grad = np.zeros_like(p.data)
