"""Full captioning model: encoder, decoder, and their shared state.

The model owns the ParameterStore, the batch-norm buffer dict, and the
construction RNG, so that two models built from the same seed and configs
are bit-identical.  Parameter names are fixed (`encoder.temp.block1.t1.*`,
`decoder.block2.cross_attn.q.*`, ...) to keep checkpoints stable.
"""
from __future__ import annotations

import numpy as np

from .decoder import Decoder, DecoderConfig
from .encoder import Encoder, EncoderConfig
from .errors import CheckpointError
from .layers import ModelSpace
from .tensor import ParameterStore, RngState, Tensor
from .tensor import ops


class CaptionModel:
    def __init__(self, enc_cfg: EncoderConfig, dec_cfg: DecoderConfig, seed: int = 0):
        self.enc_cfg = enc_cfg
        self.dec_cfg = dec_cfg
        self.params = ParameterStore()
        self.buffers: dict[str, np.ndarray] = {}
        space = ModelSpace(self.params, self.buffers, RngState(seed))
        self.encoder = Encoder(space, enc_cfg)
        self.decoder = Decoder(space, dec_cfg, d_audio=enc_cfg.output_dim)

    # ----- forward ---------------------------------------------------------

    def encode(self, features, training: bool = False, rng: RngState | None = None) -> Tensor:
        feats = features if isinstance(features, Tensor) else Tensor(features)
        return self.encoder.encode(feats, training, rng)

    def forward(
        self,
        features,
        tokens_in: np.ndarray,
        feature_lengths=None,
        training: bool = False,
        rng: RngState | None = None,
    ) -> Tensor:
        """Teacher-forced logits: (B, L, W) for batched input, (L, W) single.

        `feature_lengths` masks padded audio frames out of cross-attention.
        """
        z = self.encode(features, training, rng)
        cross_mask = None
        if feature_lengths is not None:
            t_max = z.shape[-2]
            cross_mask = ops.key_padding_mask(feature_lengths, t_max, dtype=z.dtype)
        return self.decoder.forward(tokens_in, z, cross_mask, training, rng)

    def step_logprobs(self, prefix: list[int], z: Tensor) -> np.ndarray:
        """Next-token log-probabilities after `prefix` (eval mode, no tape)."""
        tokens = np.asarray(prefix, dtype=np.int64)
        logits = self.decoder.forward(tokens, z, training=False)
        last = Tensor(logits.data[-1])
        return ops.log_softmax(last, axis=-1).data

    # ----- state -----------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Parameters plus batch-norm buffers, lexicographic by name."""
        out = {name: t.data for name, t in self.params.items()}
        for name in sorted(self.buffers):
            out[name] = self.buffers[name]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        """Restore values in place; names and shapes must match exactly."""
        current = self.state_arrays()
        for name in sorted(set(current) | set(arrays)):
            if name not in arrays:
                raise CheckpointError(f"checkpoint is missing array {name!r}")
            if name not in current:
                raise CheckpointError(f"checkpoint has unexpected array {name!r}")
            if current[name].shape != arrays[name].shape:
                raise CheckpointError(
                    f"shape mismatch for {name!r}: model {current[name].shape} "
                    f"vs checkpoint {arrays[name].shape}"
                )
        for name, arr in arrays.items():
            current[name][:] = arr.astype(current[name].dtype)
