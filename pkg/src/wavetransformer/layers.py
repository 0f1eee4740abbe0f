"""Parameterized layers built on the tensor ops.

Each layer registers its tensors into a shared ParameterStore under a
hierarchical dot-separated name (fixed naming keeps checkpoints stable) and
its non-trainable state (batch-norm running statistics) into a buffer dict.
Weights start from U(-a, a) with a = sqrt(1/fan_in); biases start at zero;
normalization scales start at one.
"""
from __future__ import annotations

import numpy as np

from .tensor import (
    ParameterStore,
    RngState,
    Tensor,
    get_default_dtype,
    init_ones,
    init_uniform,
    init_zeros,
)
from .tensor import ops


class ModelSpace:
    """Shared registration context handed to every layer at build time."""

    def __init__(self, params: ParameterStore, buffers: dict[str, np.ndarray], rng: RngState):
        self.params = params
        self.buffers = buffers
        self.rng = rng


class Conv1d:
    def __init__(self, space: ModelSpace, name: str, c_in: int, c_out: int, k: int,
                 stride: int = 1, padding: int = 0, dilation: int = 1):
        self.stride, self.padding, self.dilation = stride, padding, dilation
        self.weight = space.params.add(f"{name}.weight", init_uniform(space.rng, (c_out, c_in, k), c_in * k))
        self.bias = space.params.add(f"{name}.bias", init_zeros((c_out,)))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv1d(x, self.weight, self.bias, self.stride, self.padding, self.dilation)


class Conv2d:
    def __init__(self, space: ModelSpace, name: str, c_in: int, c_out: int, k: int,
                 stride: int = 1, padding: int = 0, groups: int = 1):
        self.stride, self.padding, self.groups = stride, padding, groups
        fan_in = (c_in // groups) * k * k
        self.weight = space.params.add(
            f"{name}.weight", init_uniform(space.rng, (c_out, c_in // groups, k, k), fan_in)
        )
        self.bias = space.params.add(f"{name}.bias", init_zeros((c_out,)))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.groups)


class Linear:
    def __init__(self, space: ModelSpace, name: str, d_in: int, d_out: int):
        self.weight = space.params.add(f"{name}.weight", init_uniform(space.rng, (d_out, d_in), d_in))
        self.bias = space.params.add(f"{name}.bias", init_zeros((d_out,)))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class BatchNorm:
    """Per-channel batch normalization; running stats live in the buffer dict."""

    def __init__(self, space: ModelSpace, name: str, channels: int,
                 momentum: float = 0.1, eps: float = 1e-5):
        self.momentum, self.eps = momentum, eps
        self.gamma = space.params.add(f"{name}.gamma", init_ones((channels,)))
        self.beta = space.params.add(f"{name}.beta", init_zeros((channels,)))
        # buffers share the engine dtype so checkpoint round-trips are exact
        self.running_mean = np.zeros(channels, dtype=get_default_dtype())
        self.running_var = np.ones(channels, dtype=get_default_dtype())
        space.buffers[f"{name}.running_mean"] = self.running_mean
        space.buffers[f"{name}.running_var"] = self.running_var

    def __call__(self, x: Tensor, training: bool, channel_axis: int = 0) -> Tensor:
        return ops.batch_norm(
            x, self.gamma, self.beta, self.running_mean, self.running_var,
            training, self.momentum, self.eps, channel_axis,
        )


class LayerNorm:
    def __init__(self, space: ModelSpace, name: str, d: int, eps: float = 1e-5):
        self.eps = eps
        self.gamma = space.params.add(f"{name}.gamma", init_ones((d,)))
        self.beta = space.params.add(f"{name}.beta", init_zeros((d,)))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gamma, self.beta, self.eps)
