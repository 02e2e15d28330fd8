"""Parameter containers and the standard transformer building blocks."""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .tensor import Tensor

INIT_STD = 0.02


class Module:
    """Attribute-registered parameter tree with deterministic traversal order."""

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return int(np.sum([p.size for p in self.parameters()]))

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


def normal_param(rng: np.random.Generator, *shape: int, std: float = INIT_STD) -> Tensor:
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)


def zeros_param(*shape: int) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def ones_param(*shape: int) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        self.weight = normal_param(rng, d_in, d_out)
        self.bias = zeros_param(d_out) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        lead = x.shape[:-1]
        y = T.matmul(x.reshape(-1, x.shape[-1]), self.weight)
        if self.bias is not None:
            y = y + self.bias
        return y.reshape(*lead, y.shape[-1])


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5):
        self.gain = ones_param(d)
        self.bias = zeros_param(d)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias, self.eps)


class FeedForward(Module):
    """Position-wise ReLU network of inner width ``4d``."""

    def __init__(self, d: int, rng: np.random.Generator):
        self.inner = Linear(d, 4 * d, rng)
        self.outer = Linear(4 * d, d, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.outer(T.relu(self.inner(x)))


def split_heads(x: Tensor, heads: int) -> Tensor:
    """[..., L, d] -> [..., heads, L, d/heads]"""
    *lead, length, width = x.shape
    x = x.reshape(*lead, length, heads, width // heads)
    n = len(lead)
    return x.transpose(*range(n), n + 1, n, n + 2)


def merge_heads(x: Tensor) -> Tensor:
    """[..., heads, L, dh] -> [..., L, heads*dh]"""
    *lead, heads, length, dh = x.shape
    n = len(lead)
    x = x.transpose(*range(n), n + 1, n, n + 2)
    return x.reshape(*lead, length, heads * dh)


class MultiHeadAttention(Module):
    """Scaled dot-product attention with query/key/value/output projections.

    ``key_pad`` is boolean ``[B, Lk]`` with True on keys to exclude.
    """

    def __init__(self, d: int, heads: int, rng: np.random.Generator):
        if d % heads:
            raise ValueError(f"width {d} is not divisible by {heads} heads")
        self.heads = heads
        self.query = Linear(d, d, rng)
        self.key = Linear(d, d, rng)
        self.value = Linear(d, d, rng)
        self.output = Linear(d, d, rng)

    def __call__(self, x: Tensor, memory: Tensor | None = None, key_pad=None, causal: bool = False):
        memory = x if memory is None else memory
        h = self.heads
        q = split_heads(self.query(x), h)
        k = split_heads(self.key(memory), h)
        v = split_heads(self.value(memory), h)
        dh = q.shape[-1]
        scores = T.scale(T.matmul(q, k.transpose(0, 1, 3, 2)), 1.0 / math.sqrt(dh))
        lq, lk = x.shape[1], memory.shape[1]
        mask = np.zeros((x.shape[0], 1, lq, lk), dtype=bool)
        if key_pad is not None:
            mask |= np.asarray(key_pad, dtype=bool)[:, None, None, :]
        if causal:
            mask |= np.triu(np.ones((lq, lk), dtype=bool), k=1)
        weights = T.masked_softmax(scores, mask)
        return self.output(merge_heads(T.matmul(weights, v)))


class EncoderLayer(Module):
    """Post-LN transformer encoder layer: self-attention then FFN."""

    def __init__(self, d: int, heads: int, rng: np.random.Generator, dropout: float = 0.0):
        self.attention = MultiHeadAttention(d, heads, rng)
        self.norm1 = LayerNorm(d)
        self.ffn = FeedForward(d, rng)
        self.norm2 = LayerNorm(d)
        self.dropout = dropout

    def __call__(self, x: Tensor, key_pad, rng=None) -> Tensor:
        x = self.norm1(x + _drop(self.attention(x, key_pad=key_pad), self.dropout, rng))
        return self.norm2(x + _drop(self.ffn(x), self.dropout, rng))


def _drop(x: Tensor, rate: float, rng) -> Tensor:
    if rng is None or rate <= 0.0:
        return x
    return T.dropout(x, rate, rng)
