"""
Adam with decoupled weight decay.

Defaults: beta1 = 0.9, beta2 = 0.999, eps = 1e-10, weight decay 1e-4.
Moments are float32 buffers keyed by parameter position.
"""

from dataclasses import dataclass, field

import numpy as np

from src.errors import InvalidInputError, ShapeError


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-10
    weight_decay: float = 1e-4
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if self.lr <= 0:
            raise InvalidInputError(f"Adam: learning rate must be positive, got {self.lr}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise InvalidInputError(f"Adam: betas must be in [0, 1), got {self.beta1}, {self.beta2}")

    def hyperparameters(self) -> dict:
        return {
            "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2,
            "eps": self.eps, "weight_decay": self.weight_decay, "step": self.step,
        }


def adam_step(params: list, grads: list, state: AdamState, decay_mask: list = None) -> list:
    """
    One Adam update, applied in place to each Tensor's data.

    A None gradient counts as zero. decay_mask[i] False exempts params[i]
    from weight decay. Returns params.
    """
    if len(params) != len(grads):
        raise InvalidInputError(f"adam_step: {len(params)} params but {len(grads)} grads")
    if decay_mask is None:
        decay_mask = [True] * len(params)
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    if len(state.m) != len(params):
        raise InvalidInputError(f"adam_step: state tracks {len(state.m)} params, got {len(params)}")

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** t
    correction2 = 1.0 - b2 ** t

    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.shape or state.m[i].shape != p.shape:
            raise ShapeError(f"adam_step: param {i} has shape {p.shape}, grad {g.shape}")
        m, v = state.m[i], state.v[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g

        if decay_mask[i] and state.weight_decay:
            p.data *= 1.0 - state.lr * state.weight_decay
        m_hat = m / correction1
        v_hat = v / correction2
        p.data -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype)

    return params


class Adam:
    """Stateful wrapper binding a parameter list to an AdamState."""

    def __init__(self, params: list, lr: float = 1e-4, weight_decay: float = 1e-4,
                 no_decay: list = None, **kwargs):
        self.params = list(params)
        self.state = AdamState(lr=lr, weight_decay=weight_decay, **kwargs)
        exempt = {id(p) for p in (no_decay or ())}
        self.decay_mask = [id(p) not in exempt for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        adam_step(self.params, [p.grad for p in self.params], self.state, self.decay_mask)

    @property
    def step_count(self) -> int:
        return self.state.step
