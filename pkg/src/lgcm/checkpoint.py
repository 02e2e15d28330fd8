"""Versioned checkpoint files: named float64 arrays plus a JSON header.

The container is an uncompressed ``.npz`` archive. ``__header__`` holds the
JSON header (format tag, version, model config, step, validation score,
optimizer hyperparameters, optional vocabulary); ``param/<name>`` holds each parameter and
``optim/m/<name>``, ``optim/v/<name>`` the AdamW moments when present.
"""

from __future__ import annotations

import json
import zipfile
from dataclasses import dataclass, field

import numpy as np

from .config import LGCMConfig
from .errors import CheckpointError, ConfigError
from .model import LGCM

FORMAT = "lgcm-checkpoint"
VERSION = 1


@dataclass
class Checkpoint:
    config: LGCMConfig
    params: dict[str, np.ndarray]
    step: int = 0
    valid_ppl: float | None = None
    optimizer: dict = field(default_factory=dict)  # hyperparameters, "t", and moment dicts "m"/"v"
    vocab: list[str] | None = None

    @classmethod
    def from_model(cls, model: LGCM, **kwargs) -> "Checkpoint":
        params = {name: p.data.copy() for name, p in model.named_parameters()}
        return cls(config=model.config, params=params, **kwargs)

    def to_model(self) -> LGCM:
        model = LGCM(self.config)
        load_parameters(model, self.params)
        return model


def load_parameters(model: LGCM, params: dict[str, np.ndarray]) -> None:
    named = dict(model.named_parameters())
    if set(named) != set(params):
        missing = sorted(set(named) - set(params))
        extra = sorted(set(params) - set(named))
        raise ConfigError(f"parameter names differ from the model (missing {missing[:3]}, unexpected {extra[:3]})")
    for name, p in named.items():
        value = params[name]
        if value.shape != p.shape:
            raise ConfigError(f"parameter {name} has shape {value.shape}, model expects {p.shape}")
        p.data = np.array(value, dtype=np.float64)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    opt = ckpt.optimizer or {}
    header = {
        "format": FORMAT,
        "version": VERSION,
        "config": ckpt.config.to_dict(),
        "step": ckpt.step,
        "valid_ppl": ckpt.valid_ppl,
        "optimizer": {k: v for k, v in opt.items() if k not in ("m", "v")},
        "vocab": ckpt.vocab,
    }
    arrays = {"__header__": np.array(json.dumps(header, sort_keys=True))}
    arrays.update({f"param/{k}": v for k, v in ckpt.params.items()})
    for slot in ("m", "v"):
        arrays.update({f"optim/{slot}/{k}": v for k, v in opt.get(slot, {}).items()})
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path, expected_config: LGCMConfig | None = None) -> Checkpoint:
    try:
        with np.load(path, allow_pickle=False) as archive:
            header = json.loads(str(archive["__header__"]))
            arrays = {k: archive[k] for k in archive.files if k != "__header__"}
    except (OSError, ValueError, KeyError, zipfile.BadZipFile, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from exc
    if header.get("format") != FORMAT:
        raise CheckpointError(f"{path}: not an lgcm checkpoint")
    if header.get("version") != VERSION:
        raise CheckpointError(f"{path}: checkpoint version {header.get('version')} != supported {VERSION}")
    config = LGCMConfig.from_dict(header["config"])
    if expected_config is not None and expected_config != config:
        diffs = {k: (v, getattr(config, k)) for k, v in expected_config.to_dict().items()
                 if config.to_dict()[k] != v}
        raise ConfigError(f"{path}: config mismatch (expected, stored): {diffs}")
    params = {k[len("param/"):]: v for k, v in arrays.items() if k.startswith("param/")}
    optimizer = dict(header.get("optimizer") or {})
    for slot in ("m", "v"):
        prefix = f"optim/{slot}/"
        moments = {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}
        if moments:
            optimizer[slot] = moments
    ckpt = Checkpoint(config, params, header.get("step", 0), header.get("valid_ppl"), optimizer, header.get("vocab"))
    # shapes are validated against a fresh model so corrupt files fail here, not mid-forward
    load_parameters(LGCM(config), params)
    return ckpt
