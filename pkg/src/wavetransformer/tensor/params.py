"""Named parameter storage and weight initialization."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from ..errors import UsageError
from .core import Tensor, get_default_dtype
from .rng import RngState


class ParameterStore:
    """Map from dot-separated hierarchical names to trainable tensors.

    Iteration is always lexicographic by name, so reductions over the store
    (gradient norms, optimizer sweeps, serialization) have a fixed order.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._params:
            raise UsageError(f"duplicate parameter name: {name}")
        tensor.requires_grad = True
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        for name in sorted(self._params):
            yield name, self._params[name]

    def tensors(self) -> Iterator[Tensor]:
        for _, t in self.items():
            yield t

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.zero_grad()

    def count(self) -> int:
        return sum(t.size for t in self._params.values())

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.items()}


def init_uniform(rng: RngState, shape: tuple, fan_in: int) -> Tensor:
    """Weights ~ U(-a, a) with a = sqrt(1/fan_in); scale-stable default."""
    a = float(np.sqrt(1.0 / fan_in))
    data = rng.uniform(-a, a, shape).astype(get_default_dtype())
    return Tensor(data)


def init_zeros(shape: tuple) -> Tensor:
    return Tensor(np.zeros(shape, dtype=get_default_dtype()))


def init_ones(shape: tuple) -> Tensor:
    return Tensor(np.ones(shape, dtype=get_default_dtype()))
