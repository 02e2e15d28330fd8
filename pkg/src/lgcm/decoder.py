"""Transformer decoder over the fused context states, and greedy generation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import data
from .nn import FeedForward, LayerNorm, Module, MultiHeadAttention, _drop
from .tensor import Tensor, no_grad


class DecoderLayer(Module):
    """Post-LN layer: causal self-attention, cross-attention, FFN."""

    def __init__(self, d: int, heads: int, rng: np.random.Generator, dropout: float = 0.0):
        self.self_attention = MultiHeadAttention(d, heads, rng)
        self.norm1 = LayerNorm(d)
        self.cross_attention = MultiHeadAttention(d, heads, rng)
        self.norm2 = LayerNorm(d)
        self.ffn = FeedForward(d, rng)
        self.norm3 = LayerNorm(d)
        self.dropout = dropout

    def __call__(self, y: Tensor, memory: Tensor, memory_pad, response_pad, rng=None) -> Tensor:
        y = self.norm1(y + _drop(self.self_attention(y, key_pad=response_pad, causal=True), self.dropout, rng))
        y = self.norm2(y + _drop(self.cross_attention(y, memory, key_pad=memory_pad), self.dropout, rng))
        return self.norm3(y + _drop(self.ffn(y), self.dropout, rng))


class Decoder(Module):
    def __init__(self, d: int, heads: int, n_layers: int, rng: np.random.Generator, dropout: float = 0.0):
        self.layers = [DecoderLayer(d, heads, rng, dropout) for _ in range(n_layers)]

    def __call__(self, y: Tensor, memory: Tensor, memory_pad, response_pad, rng=None) -> Tensor:
        for layer in self.layers:
            y = layer(y, memory, memory_pad, response_pad, rng)
        return y


@dataclass(frozen=True)
class GenerationConfig:
    max_new_tokens: int = 30
    stop_id: int = data.EOS_ID

    def __post_init__(self):
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be at least 1")


def greedy_generate(model, context, context_roles, response_role: int | None = None,
                    config: GenerationConfig = GenerationConfig()) -> list[int]:
    """Greedy decoding from [bos]; returns content ids without [bos]/[eos].

    ``context`` is a sequence of id sequences (each wrapped in [bos]/[eos]).
    Ties go to the smallest token id. The prefix is re-decoded in full at each
    step, so step logits equal teacher-forced logits for the same prefix.
    """
    if not context:
        raise ValueError("generation needs at least one context utterance")
    if response_role is None:
        response_role = 1 - context_roles[-1]
    n_max = model.config.n_max
    example = data.TrainingExample(
        tuple(tuple(u) for u in context[-n_max:]),
        tuple(context_roles[-n_max:]),
        (data.BOS_ID, data.EOS_ID),
        int(response_role),
    )
    batch = data.collate([example], max_utt_len=model.config.max_utt_len)
    limit = min(config.max_new_tokens, model.config.max_utt_len - 1)
    out: list[int] = []
    with no_grad():
        memory, memory_pad = model.encode(batch)
        for _ in range(limit):
            prefix = np.array([[data.BOS_ID, *out]], dtype=np.int64)
            logits = model.decode(memory, memory_pad, prefix, np.ones_like(prefix, dtype=bool),
                                  batch.response_role)
            nxt = int(np.argmax(logits.data[0, -1]))
            if nxt == config.stop_id:
                break
            out.append(nxt)
    return out
