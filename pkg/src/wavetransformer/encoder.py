"""Audio encoder: temporal branch, time-frequency branch, merge network.

The temporal branch stacks gated residual 1D-convolution blocks ("wave
blocks") along time; the time-frequency branch stacks depthwise-separable
2D-convolution blocks with frequency-only max pooling; the merge network
fuses the two sequences with a 2-channel convolution and a time-shared
linear map.  Four operating modes cover the ablations: full, temp_only,
tf_only, and avg.

Shape conventions: block-level functions take channel-first tensors
((C, T) / (B, C, T) for 1D, (C, T, F) / (B, C, T, F) for 2D); the
branch- and encoder-level entry points take features as (T, F) or
(B, T, F) and return (T, F') or (B, T, F').
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .layers import BatchNorm, Conv1d, Conv2d, Linear, ModelSpace
from .tensor import RngState, Tensor
from .tensor import ops

MODES = ("full", "temp_only", "tf_only", "avg")

# per-block time radius: dilation-1 gate (1) then dilation-2 gate (2)
WAVE_BLOCK_RADIUS = 3


@dataclass
class EncoderConfig:
    n_temp_blocks: int = 4
    n_tf_blocks: int = 3
    channels: int = 128          # C_out of every block, and F' of the output
    pcnn_kernel: int = 5
    pool_factors: tuple = (4, 4, 4)
    dropout_tf: float = 0.25
    mode: str = "full"
    n_mels: int = 64             # F of the input features
    # the block equations end in BN -> pool -> dropout with no extra ReLU;
    # the prose variant (ReLU after the second BN) is available but off
    tf_post_relu: bool = False

    def __post_init__(self):
        self.pool_factors = tuple(int(p) for p in self.pool_factors)
        if self.mode not in MODES:
            raise ConfigError(f"encoder mode must be one of {MODES}, got {self.mode!r}")
        if self.n_temp_blocks < 1 or self.n_tf_blocks < 1:
            raise ConfigError("block counts must be >= 1")
        if self.pcnn_kernel <= 1 or self.pcnn_kernel % 2 == 0:
            raise ConfigError(f"pcnn_kernel must be odd and > 1, got {self.pcnn_kernel}")
        if len(self.pool_factors) != self.n_tf_blocks:
            raise ConfigError(
                f"need one pool factor per tf block: {len(self.pool_factors)} != {self.n_tf_blocks}"
            )
        if int(np.prod(self.pool_factors)) != self.n_mels:
            raise ConfigError(
                f"pool factors {self.pool_factors} must multiply to F={self.n_mels} "
                "so the frequency axis collapses to 1"
            )

    @property
    def output_dim(self) -> int:
        return self.channels

    def receptive_radius(self) -> int:
        return WAVE_BLOCK_RADIUS * self.n_temp_blocks


def _as_batched(x: Tensor, ndim: int) -> tuple[Tensor, bool]:
    if x.ndim == ndim:
        return x, False
    if x.ndim == ndim - 1:
        return ops.reshape(x, (1, *x.shape)), True
    raise DimensionError(f"expected {ndim - 1}- or {ndim}-d input, got shape {x.shape}")


class WaveBlock:
    """Gated residual block of seven time convolutions.

    t1/t4/t7 are 1x1; t2/t3 are k=3 dilation-1 gates; t5/t6 are k=3
    dilation-2 gates.  All are length-preserving along time.  The final
    residual adds the intermediate gated output (the dilation-1 stage
    result), and the block closes with batch norm and a ReLU.
    """

    def __init__(self, space: ModelSpace, name: str, c_in: int, c_out: int):
        self.t1 = Conv1d(space, f"{name}.t1", c_in, c_out, k=1)
        self.t2 = Conv1d(space, f"{name}.t2", c_out, c_out, k=3, padding=1)
        self.t3 = Conv1d(space, f"{name}.t3", c_out, c_out, k=3, padding=1)
        self.t4 = Conv1d(space, f"{name}.t4", c_out, c_out, k=1)
        self.t5 = Conv1d(space, f"{name}.t5", c_out, c_out, k=3, padding=2, dilation=2)
        self.t6 = Conv1d(space, f"{name}.t6", c_out, c_out, k=3, padding=2, dilation=2)
        self.t7 = Conv1d(space, f"{name}.t7", c_out, c_out, k=1)
        self.bn = BatchNorm(space, f"{name}.bn", c_out)

    def __call__(self, h_prev: Tensor, training: bool) -> Tensor:
        x, squeeze = _as_batched(h_prev, 3)
        h2 = self.t1(x)
        s2 = ops.mul(ops.tanh(self.t2(h2)), ops.sigmoid(self.t3(h2)))
        h1 = ops.add(self.t4(s2), h2)
        s1 = ops.mul(ops.tanh(self.t5(h1)), ops.sigmoid(self.t6(h1)))
        pre = ops.add(self.t7(s1), h1)
        out = ops.relu(self.bn(pre, training, channel_axis=1))
        return ops.reshape(out, out.shape[1:]) if squeeze else out


class TFBlock:
    """Depthwise-separable 2D block with frequency-only pooling.

    S-CNN is one (5,5) kernel per input channel (groups = C_in); the
    "pointwise-role" P-CNN mixes channels with a wider-than-1x1 square
    kernel.  Following the block equations literally there is no extra
    ReLU between the second batch norm and the pooling; `post_relu`
    exposes the prose variant.
    """

    def __init__(self, space: ModelSpace, name: str, c_in: int, c_out: int,
                 pcnn_kernel: int, pool: int, dropout: float, post_relu: bool = False):
        self.scnn = Conv2d(space, f"{name}.scnn", c_in, c_in, k=5, padding=2, groups=c_in)
        self.bn_a = BatchNorm(space, f"{name}.bn_a", c_in)
        self.pcnn = Conv2d(space, f"{name}.pcnn", c_in, c_out, k=pcnn_kernel,
                           padding=(pcnn_kernel - 1) // 2)
        self.bn_b = BatchNorm(space, f"{name}.bn_b", c_out)
        self.pool = pool
        self.dropout = dropout
        self.post_relu = post_relu

    def __call__(self, h_prev: Tensor, training: bool, rng: RngState | None = None) -> Tensor:
        x, squeeze = _as_batched(h_prev, 4)
        s = self.pcnn(self.bn_a(ops.leaky_relu(self.scnn(x)), training, channel_axis=1))
        out = self.bn_b(s, training, channel_axis=1)
        if self.post_relu:
            out = ops.relu(out)
        out = ops.max_pool_freq(out, self.pool)
        out = ops.dropout(out, self.dropout, training, rng)
        return ops.reshape(out, out.shape[1:]) if squeeze else out


class MergeNet:
    """Fuse the two branch outputs: stack as 2 channels, convolve to 1,
    then apply a time-shared linear map."""

    def __init__(self, space: ModelSpace, name: str, channels: int):
        self.cnn = Conv2d(space, f"{name}.cnn", 2, 1, k=5, padding=2)
        self.fnn = Linear(space, f"{name}.fnn", channels, channels)

    def __call__(self, z_t: Tensor, z_tf: Tensor) -> Tensor:
        if z_t.shape != z_tf.shape:
            raise DimensionError(f"merge inputs differ: {z_t.shape} vs {z_tf.shape}")
        x_t, squeeze = _as_batched(z_t, 3)
        x_tf, _ = _as_batched(z_tf, 3)
        b, t, c = x_t.shape
        stacked = ops.concat(
            [ops.reshape(x_t, (b, 1, t, c)), ops.reshape(x_tf, (b, 1, t, c))], axis=1
        )
        mixed = ops.reshape(self.cnn(stacked), (b, t, c))
        out = self.fnn(mixed)
        return ops.reshape(out, out.shape[1:]) if squeeze else out


class Encoder:
    """Mode-aware assembly of the two branches and the merge network.

    Only the branches a mode uses are built, so ablated checkpoints carry
    no dead parameters.
    """

    def __init__(self, space: ModelSpace, cfg: EncoderConfig, name: str = "encoder"):
        self.cfg = cfg
        self.wave_blocks: list[WaveBlock] = []
        self.tf_blocks: list[TFBlock] = []
        self.merge: MergeNet | None = None
        if cfg.mode in ("full", "temp_only", "avg"):
            c_in = cfg.n_mels
            for i in range(cfg.n_temp_blocks):
                self.wave_blocks.append(
                    WaveBlock(space, f"{name}.temp.block{i + 1}", c_in, cfg.channels)
                )
                c_in = cfg.channels
        if cfg.mode in ("full", "tf_only", "avg"):
            c_in = 1
            for i, pool in enumerate(cfg.pool_factors):
                self.tf_blocks.append(
                    TFBlock(space, f"{name}.tf.block{i + 1}", c_in, cfg.channels,
                            cfg.pcnn_kernel, pool, cfg.dropout_tf, cfg.tf_post_relu)
                )
                c_in = cfg.channels
        if cfg.mode == "full":
            self.merge = MergeNet(space, f"{name}.merge", cfg.channels)

    def temporal_branch(self, features: Tensor, training: bool) -> Tensor:
        """(B, T, F) -> (B, T, C): mel bands become conv channels."""
        x, squeeze = _as_batched(features, 3)
        h = ops.transpose(x, (0, 2, 1))  # (B, F, T)
        for block in self.wave_blocks:
            h = block(h, training)
        out = ops.transpose(h, (0, 2, 1))
        return ops.reshape(out, out.shape[1:]) if squeeze else out

    def tf_branch(self, features: Tensor, training: bool, rng: RngState | None = None) -> Tensor:
        """(B, T, F) -> (B, T, C): 1-channel image in, frequency pooled to 1."""
        x, squeeze = _as_batched(features, 3)
        b, t, f = x.shape
        h = ops.reshape(x, (b, 1, t, f))
        for block in self.tf_blocks:
            h = block(h, training, rng)
        if h.shape[-1] != 1:
            raise DimensionError(f"frequency axis not collapsed: {h.shape}")
        out = ops.transpose(ops.reshape(h, h.shape[:-1]), (0, 2, 1))
        return ops.reshape(out, out.shape[1:]) if squeeze else out

    def encode(self, features: Tensor, training: bool = False,
               rng: RngState | None = None) -> Tensor:
        mode = self.cfg.mode
        if mode == "temp_only":
            return self.temporal_branch(features, training)
        if mode == "tf_only":
            return self.tf_branch(features, training, rng)
        z_t = self.temporal_branch(features, training)
        z_tf = self.tf_branch(features, training, rng)
        if mode == "avg":
            return ops.scale(ops.add(z_t, z_tf), 0.5)
        return self.merge(z_t, z_tf)
