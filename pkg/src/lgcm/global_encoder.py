"""Dialogue-level encoder: inter-utterance attention fused with local states by a gate.

Each global layer takes ``x`` of shape ``[B, N, L, d]`` (N utterances of L
token slots). Inter-attention lets every token of utterance t attend to every
token of every context utterance s, with a learned key bias indexed by the
utterance offset ``s - t``. The softmax runs jointly over all (s, j) keys.
The gate then mixes the layer input (local side) with the attended states
(global side): ``(1 - H) * C + H * x`` with ``H = sigmoid([x; C] W + b)``.
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .config import Variant
from .local_encoder import local_key_pad
from .nn import FeedForward, LayerNorm, Linear, Module, MultiHeadAttention, merge_heads, normal_param, split_heads
from .tensor import Tensor


def utterance_offsets(n: int, n_max: int) -> np.ndarray:
    """Row index into the relative-key table for each (t, s) pair; offset s - t."""
    idx = np.arange(n)
    return idx[None, :] - idx[:, None] + (n_max - 1)


class InterAttention(Module):
    """Multi-head inter-utterance attention followed by residual add and LayerNorm."""

    def __init__(self, d: int, heads: int, n_max: int, rng: np.random.Generator):
        self.heads = heads
        self.n_max = n_max
        self.query = Linear(d, d, rng)
        self.key = Linear(d, d, rng)
        self.value = Linear(d, d, rng)
        self.output = Linear(d, d, rng)
        # one row per offset in [-(n_max-1), n_max-1]; no clipping, shared by heads
        self.relative_keys = normal_param(rng, 2 * n_max - 1, d // heads)
        self.norm = LayerNorm(d)

    def attend(self, x: Tensor, key_pad, trace: dict | None = None) -> Tensor:
        """Attention output before the residual/LayerNorm, shape ``[B, N, L, d]``."""
        B, N, L, d = x.shape
        if N > self.n_max:
            raise IndexError(f"{N} context utterances exceed n_max={self.n_max}")
        h = self.heads
        flat = x.reshape(B, N * L, d)
        q = split_heads(self.query(flat), h)
        k = split_heads(self.key(flat), h)
        v = split_heads(self.value(flat), h)
        dh = q.shape[-1]

        content = T.matmul(q, k.transpose(0, 1, 3, 2)).reshape(B, h, N, L, N, L)
        rel = T.embedding_lookup(self.relative_keys, utterance_offsets(N, self.n_max))  # [t, s, dh]
        position = T.matmul(q.reshape(B, h, N, L, dh), rel.transpose(0, 2, 1))  # [B, h, t, i, s]
        logits = (content + position.reshape(B, h, N, L, N, 1)).reshape(B, h, N * L, N * L)
        logits = T.scale(logits, 1.0 / math.sqrt(dh))

        mask = np.asarray(key_pad, dtype=bool).reshape(B, 1, 1, N * L)
        alpha = T.masked_softmax(logits, mask)
        if trace is not None:
            trace["attention"] = alpha.data.reshape(B, h, N, L, N, L)
        out = self.output(merge_heads(T.matmul(alpha, v)))
        return out.reshape(B, N, L, d)

    def __call__(self, x: Tensor, key_pad, trace: dict | None = None) -> Tensor:
        return self.norm(x + self.attend(x, key_pad, trace))


class UtteranceSelfAttention(Module):
    """Ablation stand-in for inter-attention: attention stays inside each utterance."""

    def __init__(self, d: int, heads: int, rng: np.random.Generator):
        self.attention = MultiHeadAttention(d, heads, rng)
        self.norm = LayerNorm(d)

    def __call__(self, x: Tensor, key_pad, trace: dict | None = None) -> Tensor:
        B, N, L, d = x.shape
        pad = local_key_pad(~np.asarray(key_pad, dtype=bool)).reshape(B * N, L)
        out = self.attention(x.reshape(B * N, L, d), key_pad=pad).reshape(B, N, L, d)
        return self.norm(x + out)


class Gate(Module):
    def __init__(self, d: int, rng: np.random.Generator):
        self.fuse = Linear(2 * d, d, rng)
        self.norm = LayerNorm(d)

    def fuse_states(self, local: Tensor, glob: Tensor, trace: dict | None = None) -> Tensor:
        """Pre-normalisation fused states ``(1 - H) * glob + H * local``."""
        if local.shape != glob.shape:
            raise ValueError(f"gate operands differ in shape: {local.shape} vs {glob.shape}")
        H = T.sigmoid(self.fuse(T.concat_last_axis([local, glob])))
        fused = T.mul(T.sub(1.0, H), glob) + T.mul(H, local)
        if trace is not None:
            trace["gate"] = H.data
            trace["fused"] = fused.data
        return fused

    def __call__(self, local: Tensor, glob: Tensor, trace: dict | None = None) -> Tensor:
        return self.norm(self.fuse_states(local, glob, trace))


class FeedForwardSublayer(Module):
    """Ablation stand-in for the gate: the standard FFN sublayer on the attended states."""

    def __init__(self, d: int, rng: np.random.Generator):
        self.ffn = FeedForward(d, rng)
        self.norm = LayerNorm(d)

    def __call__(self, local: Tensor, glob: Tensor, trace: dict | None = None) -> Tensor:
        return self.norm(glob + self.ffn(glob))


class GlobalLayer(Module):
    def __init__(self, d: int, heads: int, n_max: int, rng: np.random.Generator, variant: Variant = Variant.LGCM):
        if variant is Variant.NO_INTER_ATTENTION:
            self.attention = UtteranceSelfAttention(d, heads, rng)
        else:
            self.attention = InterAttention(d, heads, n_max, rng)
        self.fusion = FeedForwardSublayer(d, rng) if variant is Variant.NO_GATE else Gate(d, rng)

    def __call__(self, x: Tensor, key_pad, trace: dict | None = None) -> Tensor:
        attended = self.attention(x, key_pad, trace)
        return self.fusion(x, attended, trace)


class GlobalEncoder(Module):
    def __init__(self, d: int, heads: int, n_layers: int, n_max: int, rng: np.random.Generator,
                 variant: Variant = Variant.LGCM):
        self.layers = [GlobalLayer(d, heads, n_max, rng, variant) for _ in range(n_layers)]

    def __call__(self, x: Tensor, context_mask, traces: list | None = None) -> Tensor:
        """Stack the global layers over ``x`` of shape ``[B, N, L, d]``.

        ``context_mask`` is True on real tokens. When ``traces`` is a list,
        one dict of inspection arrays per layer is appended to it.
        """
        key_pad = ~np.asarray(context_mask, dtype=bool)
        for layer in self.layers:
            trace = None if traces is None else {}
            x = layer(x, key_pad, trace)
            if traces is not None:
                traces.append(trace)
        return x
