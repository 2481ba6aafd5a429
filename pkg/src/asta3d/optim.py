"""Adam with a stepwise learning-rate decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def step_decay(base_lr, step, factor, period):
    """Learning rate after ``step`` updates: base * factor ** (step // period)."""
    return base_lr * factor ** (step // period)


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    decay_factor: float = 0.7
    decay_period: int = 200_000
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)

    @property
    def current_lr(self):
        return step_decay(self.learning_rate, self.step_count, self.decay_factor, self.decay_period)


def adam_step(named_params, state):
    """One Adam update in place over ``(name, Parameter)`` pairs.

    The rate used for update ``n`` (1-based) is the decayed rate after
    ``n - 1`` completed steps.
    """
    named_params = list(named_params)
    for name, p in named_params:
        if p.grad is None:
            raise ValueError(f"parameter {name!r} has no gradient")
    lr = state.current_lr
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for name, p in named_params:
        m = state.first_moment.setdefault(name, np.zeros_like(p.data))
        v = state.second_moment.setdefault(name, np.zeros_like(p.data))
        g = p.grad
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return state


class Adam:
    """Thin wrapper binding a module's parameters to an AdamState."""

    def __init__(self, module, lr=1e-3, decay_factor=0.7, decay_period=200_000):
        self.module = module
        self.state = AdamState(learning_rate=lr, decay_factor=decay_factor,
                               decay_period=decay_period)

    def step(self):
        # parameters unreachable from the loss (e.g. all anchors empty) get a zero gradient
        named = []
        for name, p in self.module.named_parameters():
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
            named.append((name, p))
        adam_step(named, self.state)

    def zero_grad(self):
        self.module.zero_grad()
