"""Adam."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def init(self, params) -> "AdamState":
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0
        return self


def adam_step(params, grads, state: AdamState) -> None:
    """In-place update of every array in ``params``.

    Moments are kept in the parameter dtype; the bias corrections are
    computed in float64.
    """
    if not state.m:
        state.init(params)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            continue
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        mhat = m / c1
        vhat = v / c2
        p -= (state.lr * mhat / (np.sqrt(vhat) + state.eps)).astype(p.dtype, copy=False)


class Adam:
    """Optimizer over a list of Tensors with ``.grad``."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.state = AdamState(lr, betas[0], betas[1], eps).init([p.value for p in self.params])

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        adam_step([p.value for p in self.params], [p.grad for p in self.params], self.state)
