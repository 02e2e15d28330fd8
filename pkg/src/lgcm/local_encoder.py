"""Per-utterance transformer encoder with one parameter set shared by all utterances."""

from __future__ import annotations

import numpy as np

from .nn import EncoderLayer, Module
from .tensor import Tensor


def local_key_pad(context_mask: np.ndarray) -> np.ndarray:
    """Key-exclusion mask for attention inside each utterance.

    Batch-padding utterances have no real token; their first slot is left
    visible so the softmax stays defined. Their outputs are excluded as keys
    everywhere downstream, so the choice never reaches a real output.
    """
    pad = ~np.asarray(context_mask, dtype=bool)
    empty = pad.all(axis=-1)
    pad[..., 0] &= ~empty
    return pad


class LocalEncoder(Module):
    def __init__(self, d: int, heads: int, n_layers: int, rng: np.random.Generator, dropout: float = 0.0):
        self.layers = [EncoderLayer(d, heads, rng, dropout) for _ in range(n_layers)]

    def __call__(self, x: Tensor, context_mask, rng=None) -> Tensor:
        """Encode ``x`` of shape ``[B, N, L, d]`` one utterance at a time."""
        B, N, L, d = x.shape
        pad = local_key_pad(context_mask).reshape(B * N, L)
        h = x.reshape(B * N, L, d)
        for layer in self.layers:
            h = layer(h, pad, rng)
        return h.reshape(B, N, L, d)
