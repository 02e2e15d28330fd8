"""Model hyperparameters and the ablation variant tags."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum

from .errors import ConfigError


class Variant(str, Enum):
    LGCM = "LGCM"
    NO_INTER_ATTENTION = "NO_INTER_ATTENTION"
    NO_GATE = "NO_GATE"
    FLAT_TRANSFORMER = "FLAT_TRANSFORMER"

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            names = ", ".join(v.value for v in cls)
            raise ConfigError(f"unknown variant {value!r}; expected one of {names}") from None


@dataclass(frozen=True)
class LGCMConfig:
    vocab_size: int
    d: int = 64
    heads: int = 4
    n_local: int = 2
    n_global: int = 2
    n_dec: int = 2
    n_max: int = 7
    max_utt_len: int = 32
    variant: Variant = Variant.LGCM
    dropout: float = 0.0
    scale_embeddings: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if self.d <= 0 or self.heads <= 0 or self.d % self.heads:
            raise ConfigError(f"d={self.d} must be a positive multiple of heads={self.heads}")
        for name in ("n_local", "n_global", "n_dec"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.vocab_size < 4 or self.n_max < 1 or self.max_utt_len < 2:
            raise ConfigError("vocab_size >= 4, n_max >= 1 and max_utt_len >= 2 are required")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")

    @property
    def head_dim(self) -> int:
        return self.d // self.heads

    @property
    def n_flat(self) -> int:
        """Encoder depth of the flat baseline: same layer count as the hierarchy."""
        return self.n_local + self.n_global

    @classmethod
    def reference_scale(cls, vocab_size: int, **overrides) -> "LGCMConfig":
        base = dict(d=512, heads=8, n_local=3, n_global=3, n_dec=6, n_max=7)
        base.update(overrides)
        return cls(vocab_size=vocab_size, **base)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["variant"] = self.variant.value
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "LGCMConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**raw)

    def replace(self, **changes) -> "LGCMConfig":
        return dataclasses.replace(self, **changes)
