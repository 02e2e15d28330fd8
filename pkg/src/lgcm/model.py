"""LGCM assembly, its ablation variants, and the response NLL objective."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .config import LGCMConfig, Variant
from .data import Batch
from .decoder import Decoder
from .embeddings import EmbeddingTables
from .errors import ContractError
from .global_encoder import GlobalEncoder
from .local_encoder import LocalEncoder
from .nn import EncoderLayer, Module
from .tensor import Tensor


class LGCM(Module):
    """Hierarchical encoder-decoder; ``config.variant`` selects the ablation.

    The flat baseline swaps the local/global hierarchy for ``n_local + n_global``
    standard encoder layers over the concatenated context, with utterance
    positions added at the input.
    """

    def __init__(self, config: LGCMConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        d, h = config.d, config.heads
        self.embeddings = EmbeddingTables(config.vocab_size, d, config.max_utt_len, config.n_max, rng,
                                          scale_tokens=config.scale_embeddings)
        if config.variant is Variant.FLAT_TRANSFORMER:
            self.flat_encoder = [EncoderLayer(d, h, rng, config.dropout) for _ in range(config.n_flat)]
        else:
            self.local_encoder = LocalEncoder(d, h, config.n_local, rng, config.dropout)
            self.global_encoder = GlobalEncoder(d, h, config.n_global, config.n_max, rng, config.variant)
        self.decoder = Decoder(d, h, config.n_dec, rng, config.dropout)
        self.training = False
        self._dropout_rng = np.random.default_rng([config.seed, 1])

    @property
    def variant(self) -> Variant:
        return self.config.variant

    def train(self, mode: bool = True) -> "LGCM":
        self.training = mode
        return self

    def eval(self) -> "LGCM":
        return self.train(False)

    def _rng(self):
        return self._dropout_rng if self.training and self.config.dropout > 0 else None

    def encode(self, batch: Batch, traces: list | None = None) -> tuple[Tensor, np.ndarray]:
        """Context states flattened to ``[B, N*L, d]`` plus their pad mask (True = pad)."""
        B, N, L = batch.context_ids.shape
        if N > self.config.n_max:
            raise IndexError(f"{N} context utterances exceed n_max={self.config.n_max}")
        emb = self.embeddings
        x = emb.embed_utterance(batch.context_ids, batch.context_roles, batch.token_positions)
        pad = ~batch.context_mask.reshape(B, N * L)
        if self.variant is Variant.FLAT_TRANSFORMER:
            h = emb.add_utterance_positions(x, batch.utterance_positions).reshape(B, N * L, self.config.d)
            for layer in self.flat_encoder:
                h = layer(h, pad, self._rng())
            return h, pad
        c = self.local_encoder(x, batch.context_mask, self._rng())
        if self.global_encoder.layers:
            c = emb.add_utterance_positions(c, batch.utterance_positions)
        c = self.global_encoder(c, batch.context_mask, traces)
        return c.reshape(B, N * L, self.config.d), pad

    def decode(self, memory: Tensor, memory_pad, response_in, response_mask, response_role) -> Tensor:
        """Logits ``[B, R, V]`` for teacher-forced response inputs."""
        R = response_in.shape[1]
        positions = np.broadcast_to(np.arange(R), response_in.shape)
        y = self.embeddings.embed_utterance(response_in, response_role, positions)
        y = self.decoder(y, memory, memory_pad, ~np.asarray(response_mask, dtype=bool), self._rng())
        return self.embeddings.output_logits(y)

    def logits(self, batch: Batch, traces: list | None = None) -> Tensor:
        memory, pad = self.encode(batch, traces)
        return self.decode(memory, pad, batch.response_in, batch.response_mask, batch.response_role)

    def nll(self, batch: Batch) -> Tensor:
        """Summed response-token NLL (context tokens never contribute)."""
        return T.nll_sum(self.logits(batch), batch.response_out, batch.response_mask)

    def forward_loss(self, batch: Batch) -> Tensor:
        count = batch.num_targets
        if count == 0:
            raise ContractError("batch has no response target tokens")
        return T.scale(self.nll(batch), 1.0 / count)


def build_variant(config: LGCMConfig) -> LGCM:
    return LGCM(config)


def mean_nll(logits: Tensor, targets, mask) -> Tensor:
    """Mean NLL over the True entries of ``mask``."""
    count = int(np.asarray(mask).sum())
    if count == 0:
        raise ContractError("no target tokens")
    return T.scale(T.nll_sum(logits, targets, mask), 1.0 / count)


def expected_parameter_count(config: LGCMConfig) -> int:
    """Parameter count derived from shapes alone, independent of the module tree."""
    d, V, dh = config.d, config.vocab_size, config.head_dim
    linear = lambda i, o: i * o + o  # noqa: E731
    norm = 2 * d
    mha = 4 * linear(d, d)
    ffn = linear(d, 4 * d) + linear(4 * d, d)
    encoder_layer = mha + norm + ffn + norm
    total = V * d + config.max_utt_len * d + 2 * d + config.n_max * d
    total += config.n_dec * (2 * mha + ffn + 3 * norm)
    if config.variant is Variant.FLAT_TRANSFORMER:
        return total + config.n_flat * encoder_layer
    total += config.n_local * encoder_layer
    attention = mha + norm
    if config.variant is not Variant.NO_INTER_ATTENTION:
        attention += (2 * config.n_max - 1) * dh
    fusion = (ffn if config.variant is Variant.NO_GATE else linear(2 * d, d)) + norm
    return total + config.n_global * (attention + fusion)
