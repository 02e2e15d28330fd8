"""INI-style run configuration with strict key checking.

Sections and keys (all optional except where a command needs them)::

    [run]       seed, out_dir
    [data]      train, valid, test, vocab, min_freq
    [model]     d, heads, n_local, n_global, n_dec, n_max, max_utt_len,
                variant, dropout, scale_embeddings
    [train]     lr, batch_size, max_steps, clip_norm, eval_interval, beta1,
                beta2, eps, weight_decay, warmup_steps
    [generate]  max_new_tokens
    [metrics]   copy_reference
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .config import LGCMConfig, Variant
from .errors import ConfigError
from .trainer import TrainConfig


@dataclass
class DataPaths:
    train: str = ""
    valid: str = ""
    test: str = ""
    vocab: str = ""
    min_freq: int = 2


@dataclass
class ModelSection:
    d: int = 64
    heads: int = 4
    n_local: int = 2
    n_global: int = 2
    n_dec: int = 2
    n_max: int = 7
    max_utt_len: int = 32
    variant: str = "LGCM"
    dropout: float = 0.0
    scale_embeddings: bool = False


@dataclass
class TrainSection:
    lr: float = 1e-4
    batch_size: int = 16
    max_steps: int = 1000
    clip_norm: float = 1.0
    eval_interval: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    warmup_steps: int = 0


@dataclass
class GenerateSection:
    max_new_tokens: int = 30


@dataclass
class MetricsSection:
    copy_reference: bool = False


@dataclass
class RunSection:
    seed: int = 0
    out_dir: str = "runs/default"


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    data: DataPaths = field(default_factory=DataPaths)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    generate: GenerateSection = field(default_factory=GenerateSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)

    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def model_config(self, vocab_size: int) -> LGCMConfig:
        m = dataclasses.asdict(self.model)
        return LGCMConfig(vocab_size=vocab_size, seed=self.run.seed, **{**m, "variant": Variant.parse(m["variant"])})

    def train_config(self) -> TrainConfig:
        return TrainConfig(seed=self.run.seed, **dataclasses.asdict(self.train))

    def to_ini(self) -> str:
        lines = []
        for section in _SECTIONS:
            lines.append(f"[{section}]")
            for f in dataclasses.fields(getattr(self, section)):
                value = getattr(getattr(self, section), f.name)
                lines.append(f"{f.name} = {str(value).lower() if isinstance(value, bool) else value}")
            lines.append("")
        return "\n".join(lines)

    def write(self, path) -> None:
        Path(path).write_text(self.to_ini(), encoding="utf-8")


_SECTIONS = ("run", "data", "model", "train", "generate", "metrics")


def _convert(raw: str, kind, where: str):
    try:
        if kind is bool:
            lowered = raw.strip().lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return lowered in ("true", "1", "yes")
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {kind.__name__}") from None


def parse_run_config(text: str, base_dir=".") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__no_defaults__")
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    cfg = RunConfig(base_dir=Path(base_dir))
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        target = getattr(cfg, section)
        types = {f.name: f.type for f in dataclasses.fields(target)}
        for key, raw in parser.items(section):
            if key not in types:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            kind = {"int": int, "float": float, "bool": bool, "str": str}[types[key]]
            setattr(target, key, _convert(raw, kind, f"[{section}] {key}"))
    return cfg


def load_run_config(path) -> RunConfig:
    path = Path(path)
    return parse_run_config(path.read_text(encoding="utf-8"), base_dir=path.parent)
