"""Adam optimizer and global gradient-norm clipping."""
from __future__ import annotations

import numpy as np

from ..errors import UsageError
from .params import ParameterStore


class AdamState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self):
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def ensure(self, name: str, like: np.ndarray) -> None:
        if name not in self.m:
            self.m[name] = np.zeros_like(like)
            self.v[name] = np.zeros_like(like)


def adam_step(
    params: ParameterStore,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    step: int | None = None,
) -> None:
    """One bias-corrected Adam update over every parameter in the store.

    A parameter with no gradient this step contributes a zero gradient, so
    its moments decay but (on a fresh state) it does not move.
    """
    if step is None:
        step = state.step + 1
    if step < 1:
        raise UsageError(f"adam step counter must be >= 1, got {step}")
    state.step = step
    c1 = 1.0 - beta1 ** step
    c2 = 1.0 - beta2 ** step
    for name, t in params.items():
        state.ensure(name, t.data)
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        t.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(t.data.dtype)


def clip_grad_norm(params: ParameterStore, max_norm: float) -> float:
    """Clip the global 2-norm of all gradients to `max_norm`.

    Returns the pre-clip norm.  The squared-norm accumulation runs in
    float64 over the store's lexicographic order, so the value does not
    depend on how parameters happen to be grouped into tensors.
    """
    total = 0.0
    for _, t in params.items():
        if t.grad is not None:
            total += float(np.sum(t.grad.astype(np.float64) ** 2))
    norm = float(np.sqrt(total))
    if norm > max_norm:
        for _, t in params.items():
            if t.grad is not None:
                t.grad *= t.grad.dtype.type(max_norm / norm)
    return norm
