"""Encoder FLOP accounting for the hierarchical and flat encoders.

``closed_form`` mode uses the textbook convention: a multiply-accumulate is two
FLOPs, only the Q/K/V projections, score and value products, FFN and gate
matrix products are counted, and the attention output projection, softmax,
LayerNorm, biases and the relative key bias are left out. Inter-attention is
charged as full-length self-attention. ``exact`` mode adds the output
projection and the relative-bias products on top of that.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

from .config import LGCMConfig


def self_attention_flops(L: int, d: int) -> int:
    """6Ld^2 + 4L^2d: three projections plus the score and value products."""
    return 6 * L * d * d + 4 * L * L * d


def local_self_attention_flops(lengths, d: int) -> int:
    """Self-attention run independently on each utterance length."""
    return sum(self_attention_flops(n, d) for n in lengths)


def ffn_flops(L: int, d: int) -> int:
    return 16 * L * d * d


def gate_flops(L: int, d: int) -> int:
    return 4 * L * d * d


def equal_lengths(L_total: int, N: int) -> list[int]:
    if N < 1 or L_total % N:
        raise ValueError(f"L={L_total} is not divisible into {N} equal utterances")
    return [L_total // N] * N


@dataclass(frozen=True)
class FlopReport:
    L: int
    N: int
    d: int
    n_local: int
    n_global: int
    mode: str
    flat_self_attention: int
    local_self_attention: int
    inter_attention: int
    ffn: int
    gate: int
    lgcm_encoder: int
    flat_encoder: int

    @property
    def lgcm_cheaper(self) -> bool:
        return self.lgcm_encoder < self.flat_encoder

    def rows(self):
        return [
            ("self_attention_flat_layer", self.flat_self_attention),
            ("self_attention_local_layer", self.local_self_attention),
            ("inter_attention_layer", self.inter_attention),
            ("ffn_layer", self.ffn),
            ("gate_layer", self.gate),
            (f"lgcm_encoder_{self.n_local}+{self.n_global}_layers", self.lgcm_encoder),
            (f"flat_encoder_{self.n_local + self.n_global}_layers", self.flat_encoder),
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["component", "flops"])
        writer.writerows(self.rows())
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"# FLOP report ({self.mode} convention) L={self.L} N={self.N} d={self.d}"]
        width = max(len(name) for name, _ in self.rows())
        lines += [f"{name:<{width}}  {value:>18,d}" for name, value in self.rows()]
        verdict = "LGCM encoder < flat encoder" if self.lgcm_cheaper else "LGCM encoder >= flat encoder"
        ratio = self.lgcm_encoder / self.flat_encoder
        lines.append(f"verdict: {verdict} (ratio {ratio:.4f})")
        return "\n".join(lines)

    def as_dict(self) -> dict:
        out = asdict(self)
        out["lgcm_cheaper"] = self.lgcm_cheaper
        return out


def count_flops(config: LGCMConfig | None = None, L_total: int = 128, N: int = 1, lengths=None,
                mode: str = "closed_form", d: int | None = None, n_local: int | None = None,
                n_global: int | None = None) -> FlopReport:
    """Per-layer and whole-encoder FLOPs for a context of ``L_total`` tokens in ``N`` utterances.

    ``lengths`` gives unequal utterance lengths (summed exactly); otherwise the
    context is split into N equal utterances.
    """
    if mode not in ("closed_form", "exact"):
        raise ValueError(f"unknown mode {mode!r}")
    d = d if d is not None else config.d
    n_local = n_local if n_local is not None else config.n_local
    n_global = n_global if n_global is not None else config.n_global
    if lengths is None:
        lengths = equal_lengths(L_total, N)
    else:
        lengths = list(lengths)
        L_total, N = sum(lengths), len(lengths)

    flat_sa = self_attention_flops(L_total, d)
    local_sa = local_self_attention_flops(lengths, d)
    inter = flat_sa
    if mode == "exact":
        projection = 2 * L_total * d * d
        flat_sa += projection
        local_sa += projection
        # each query meets one relative key vector (width d/h, summed over heads: d) per utterance
        inter += projection + 2 * L_total * N * d
    ffn = ffn_flops(L_total, d)
    gate = gate_flops(L_total, d)
    return FlopReport(
        L=L_total, N=N, d=d, n_local=n_local, n_global=n_global, mode=mode,
        flat_self_attention=flat_sa,
        local_self_attention=local_sa,
        inter_attention=inter,
        ffn=ffn,
        gate=gate,
        lgcm_encoder=n_local * (local_sa + ffn) + n_global * (inter + gate),
        flat_encoder=(n_local + n_global) * (flat_sa + ffn),
    )
