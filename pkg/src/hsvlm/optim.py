"""Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8, no decay)."""

from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import ShapeMismatch


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, params, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        return cls(m=[np.zeros_like(p, dtype=np.float64) for p in params],
                   v=[np.zeros_like(p, dtype=np.float64) for p in params],
                   t=0, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(params, grads, state: AdamState, lr: float) -> AdamState:
    """One in-place Adam update over a parameter list; increments t."""
    if lr <= 0:
        raise ValueError("lr must be positive")
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ShapeMismatch("params/grads/state length mismatch")
    state.t += 1
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeMismatch(f"param {p.shape} vs grad {g.shape} vs moment {m.shape}")
        backend.adam_update(p, np.ascontiguousarray(g, dtype=np.float64), m, v,
                            float(lr), state.beta1, state.beta2, state.eps, state.t)
    return state
