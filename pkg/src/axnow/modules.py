"""Layer building blocks: a minimal Module container plus the standard layers
the models are assembled from. Parameter names are derived from attribute
paths (e.g. ``encoder.1.conv1.weight``) and are unique within a model.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import ops
from .tensor import Parameter, Tensor, he_uniform, ones, zeros


class Module:
    """Container tracking parameters, buffers and the train/eval flag."""

    def __init__(self):
        self.training = True

    def _children(self) -> Iterator[tuple[str, "Module"]]:
        for name, val in vars(self).items():
            if isinstance(val, Module):
                yield name, val
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, val in vars(self).items():
            if isinstance(val, Parameter):
                path = prefix + name
                if not val.name:
                    val.name = path
                yield path, val
        for name, child in self._children():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        """Non-trainable state (e.g. batchnorm running stats)."""
        for name, val in vars(self).items():
            if isinstance(val, np.ndarray):
                yield prefix + name, val
        for name, child in self._children():
            yield from child.named_buffers(prefix + name + ".")

    def train(self, flag: bool = True) -> "Module":
        self.training = flag
        for _, child in self._children():
            child.train(flag)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


class Linear(Module):
    def __init__(self, din: int, dout: int, rng: np.random.Generator, zero_init: bool = False):
        super().__init__()
        w = zeros((dout, din)) if zero_init else he_uniform(rng, (dout, din), fan_in=din)
        self.weight = Parameter(w)
        self.bias = Parameter(zeros(dout))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(
        self,
        cin: int,
        cout: int,
        kernel: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int = 0,
    ):
        super().__init__()
        self.stride = stride
        self.padding = padding
        self.weight = Parameter(he_uniform(rng, (cout, cin, kernel, kernel), fan_in=cin * kernel * kernel))
        self.bias = Parameter(zeros(cout))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class ConvTranspose2d(Module):
    def __init__(self, cin: int, cout: int, kernel: int, rng: np.random.Generator, stride: int = 1):
        super().__init__()
        self.stride = stride
        self.weight = Parameter(he_uniform(rng, (cin, cout, kernel, kernel), fan_in=cin * kernel * kernel))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv_transpose2d(x, self.weight, stride=self.stride)


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.gamma = Parameter(ones(channels))
        self.beta = Parameter(zeros(channels))
        self.running_mean = zeros(channels)
        self.running_var = ones(channels)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.batchnorm2d(
            x,
            self.gamma,
            self.beta,
            self.running_mean,
            self.running_var,
            training=self.training,
            momentum=self.momentum,
            eps=self.eps,
        )


class LayerNorm(Module):
    def __init__(self, channels: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = Parameter(ones(channels))
        self.beta = Parameter(zeros(channels))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gamma, self.beta, eps=self.eps)


class Dropout(Module):
    """Needs the owner's rng at call time so runs stay seed-reproducible."""

    def __init__(self, p: float):
        super().__init__()
        self.p = p

    def __call__(self, x: Tensor, rng: np.random.Generator) -> Tensor:
        return ops.dropout(x, self.p, rng, training=self.training)
