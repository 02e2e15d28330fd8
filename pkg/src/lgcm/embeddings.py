"""Token, token-position, role and utterance-position embedding tables.

The token table doubles as the output projection: logits are always
``hidden @ E.T``.
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .nn import Module, normal_param
from .tensor import Tensor


class EmbeddingTables(Module):
    def __init__(self, vocab_size: int, d: int, max_utt_len: int, n_max: int,
                 rng: np.random.Generator, scale_tokens: bool = False):
        self.token = normal_param(rng, vocab_size, d)
        self.position = normal_param(rng, max_utt_len, d)
        self.role = normal_param(rng, 2, d)
        self.utterance_position = normal_param(rng, n_max, d)
        self.scale_tokens = scale_tokens

    def embed_utterance(self, token_ids, roles, positions) -> Tensor:
        """Row i is ``E[id_i] + p[pos_i] + r[role]``.

        ``token_ids`` and ``positions`` share a shape ``[..., L]``; ``roles``
        holds one role per utterance, shape ``[...]``.
        """
        tok = T.embedding_lookup(self.token, token_ids)
        if self.scale_tokens:
            tok = T.scale(tok, math.sqrt(self.token.shape[1]))
        pos = T.embedding_lookup(self.position, positions)
        role = T.embedding_lookup(self.role, np.asarray(roles)[..., None])
        return tok + pos + role

    def add_utterance_positions(self, c: Tensor, utterance_positions) -> Tensor:
        """Add ``p_u[pos_t]`` to every token row of utterance t; ``c`` is ``[B, N, L, d]``."""
        pu = T.embedding_lookup(self.utterance_position, np.asarray(utterance_positions)[..., None])
        return c + pu

    def output_logits(self, hidden: Tensor) -> Tensor:
        lead = hidden.shape[:-1]
        flat = hidden.reshape(-1, hidden.shape[-1])
        logits = T.matmul(flat, T.transpose(self.token))
        return logits.reshape(*lead, self.token.shape[0])
