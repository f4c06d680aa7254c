"""SGD with momentum and a stepped learning-rate decay schedule."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError


@dataclass
class SgdMomentumState:
    """Velocity buffers plus the schedule: lr is multiplied by decay_factor at
    every iteration index in decay_steps."""

    learning_rate: float = 0.01
    momentum: float = 0.9
    decay_steps: tuple = (45000, 75000)
    decay_factor: float = 0.1
    velocity: dict = field(default_factory=dict)

    def lr_at(self, iteration):
        lr = self.learning_rate
        for step in self.decay_steps:
            if iteration >= step:
                lr *= self.decay_factor
        return lr


def sgd_momentum_step(params, grads, state, iteration):
    """In-place update: v <- m*v - lr(it)*g; p <- p + v.

    `params`/`grads` are dicts of same-shaped arrays keyed by parameter name.
    """
    lr = state.lr_at(iteration)
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"grad shape {g.shape} != param shape {p.shape} for '{name}'")
        v = state.velocity.get(name)
        if v is None:
            v = np.zeros_like(p)
            state.velocity[name] = v
        v *= state.momentum
        v -= lr * g
        p += v
    return params
