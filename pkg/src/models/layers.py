"""
Parameter containers for the network.

Module discovers its parameters by walking instance attributes in
definition order, so parameter names are stable ("trans.encoder.layers.0.attn.wq.weight")
and checkpoints map one-to-one onto the model.
"""

import numpy as np
from scipy.stats import truncnorm

from src.diffcore import Tensor, conv2d, gelu, layer_norm, linear
from src.errors import CompatibilityError, ShapeError


def trunc_normal(rng: np.random.Generator, shape: tuple, std: float = 0.02) -> np.ndarray:
    """Normal(0, std) truncated at two standard deviations."""
    return truncnorm.rvs(-2.0, 2.0, scale=std, size=shape, random_state=rng).astype(np.float32)


def fan_in_uniform(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def parameter(values: np.ndarray) -> Tensor:
    return Tensor(np.asarray(values, dtype=np.float32), requires_grad=True)


class Module:
    training = False

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def _children(self):
        for name, value in vars(self).items():
            if isinstance(value, (Tensor, Module)):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Tensor, Module)):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> list:
        out = []
        for name, value in self._children():
            full = f"{prefix}{name}"
            if isinstance(value, Module):
                out.extend(value.named_parameters(full + "."))
            elif value.requires_grad:
                out.append((full, value))
        return out

    def parameters(self) -> list:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> list:
        found = [self]
        for _, value in self._children():
            if isinstance(value, Module):
                found.extend(value.modules())
        return found

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def to(self, dtype) -> "Module":
        """Cast every parameter in place (float64 for gradient checks)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict):
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise CompatibilityError(
                f"parameter names differ (missing {missing[:5]}, unexpected {extra[:5]})"
            )
        for name, p in own.items():
            values = np.asarray(state[name])
            if values.shape != p.shape:
                raise ShapeError(f"load_state_dict: '{name}' has shape {values.shape}, model expects {p.shape}")
            p.data = values.astype(p.dtype).copy()


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.weight = parameter(fan_in_uniform(rng, (in_dim, out_dim), in_dim))
        self.bias = parameter(fan_in_uniform(rng, (out_dim,), in_dim))

    def forward(self, x: Tensor) -> Tensor:
        return linear(x, self.weight, self.bias)


class Conv2d(Module):
    """NHWC convolution with 'same'-style padding k // 2."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int, rng: np.random.Generator, stride: int = 1):
        fan_in = kernel * kernel * in_ch
        self.weight = parameter(fan_in_uniform(rng, (kernel, kernel, in_ch, out_ch), fan_in))
        self.bias = parameter(fan_in_uniform(rng, (out_ch,), fan_in))
        self.stride = stride
        self.padding = kernel // 2

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class LayerNorm(Module):
    def __init__(self, dim: int):
        self.gamma = parameter(np.ones(dim))
        self.beta = parameter(np.zeros(dim))

    def forward(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta)


class MLPHead(Module):
    """
    Regression head: one hidden layer that keeps the input width, gelu,
    then a linear layer to the target dimension.
    """

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.hidden = Linear(in_dim, in_dim, rng)
        self.out = Linear(in_dim, out_dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.out(gelu(self.hidden(x)))
