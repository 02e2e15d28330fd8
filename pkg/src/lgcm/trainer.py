"""AdamW training with gradient clipping and best-validation-perplexity selection."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, load_parameters, save_checkpoint
from .data import collate, iterate_batches
from .errors import ConfigError, DataError, NumericError
from .model import LGCM
from .tensor import backward, no_grad

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
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
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0 or self.batch_size < 1 or self.max_steps < 0 or self.eval_interval < 1:
            raise ConfigError("lr >= 0, batch_size >= 1, max_steps >= 0 and eval_interval >= 1 are required")
        if self.clip_norm <= 0 or self.eps <= 0 or not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("clip_norm > 0, eps > 0 and betas in [0, 1) are required")


class AdamW:
    """Adam with bias-corrected moments and weight decay applied to the weights directly."""

    def __init__(self, params: dict, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data *= 1.0 - lr * self.weight_decay
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def hyper(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
                "weight_decay": self.weight_decay, "t": self.t}

    def state(self) -> dict:
        return {**self.hyper(), "m": {k: v.copy() for k, v in self.m.items()},
                "v": {k: v.copy() for k, v in self.v.items()}}

    def load_state(self, state: dict) -> None:
        self.t = int(state.get("t", 0))
        for slot in ("m", "v"):
            for k, arr in state.get(slot, {}).items():
                getattr(self, slot)[k] = np.array(arr, dtype=np.float64)


def clip_grad_norm(params, max_norm: float) -> float:
    """Rescale gradients in place so their global L2 norm is at most ``max_norm``."""
    grads = [p.grad for p in params if p.grad is not None]
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > max_norm:
        factor = max_norm / total
        for g in grads:
            g *= factor
    return total


def evaluate_ppl(model: LGCM, examples, batch_size: int = 16) -> float:
    """exp(total response NLL / total response tokens); batch-size independent."""
    if not examples:
        raise DataError("cannot evaluate perplexity on an empty dataset")
    total, count = 0.0, 0
    was_training = model.training
    model.eval()
    with no_grad():
        for chunk in iterate_batches(examples, batch_size, shuffle=False):
            batch = collate(chunk, max_utt_len=model.config.max_utt_len)
            total += model.nll(batch).item()
            count += batch.num_targets
    model.train(was_training)
    return math.exp(total / count)


@dataclass
class TrainResult:
    best: Checkpoint
    log: list[dict] = field(default_factory=list)
    final_step: int = 0


def _lr_at(cfg: TrainConfig, step: int) -> float:
    if cfg.warmup_steps and step <= cfg.warmup_steps:
        return cfg.lr * step / cfg.warmup_steps
    return cfg.lr


def train(model: LGCM, train_set, valid_set, cfg: TrainConfig, out_dir=None) -> TrainResult:
    """Train for ``cfg.max_steps`` updates and return the best-validation checkpoint.

    Validation perplexity is measured every ``eval_interval`` steps and after
    the last step. With ``out_dir`` set, ``metrics.csv`` and ``best.npz`` are
    written there.
    """
    if not train_set or not valid_set:
        raise DataError("training and validation sets must be non-empty")
    params = dict(model.named_parameters())
    opt = AdamW(params, lr=cfg.lr, betas=(cfg.beta1, cfg.beta2), eps=cfg.eps, weight_decay=cfg.weight_decay)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        log_fh = open(out / "metrics.csv", "w", newline="")
        writer = csv.writer(log_fh)
        writer.writerow(["step", "train_loss", "valid_ppl"])

    records: list[dict] = []
    best_ppl = math.inf
    best = Checkpoint.from_model(model, step=0, valid_ppl=None, optimizer=opt.state())
    step, epoch, window = 0, 0, []
    model.train()
    try:
        while step < cfg.max_steps:
            for chunk in iterate_batches(train_set, cfg.batch_size, seed=cfg.seed, epoch=epoch):
                if step >= cfg.max_steps:
                    break
                batch = collate(chunk, max_utt_len=model.config.max_utt_len)
                model.zero_grad()
                loss = model.forward_loss(batch)
                value = loss.item()
                if not math.isfinite(value):
                    raise NumericError(f"non-finite training loss {value} at step {step + 1} (epoch {epoch})")
                backward(loss)
                clip_grad_norm(opt.params.values(), cfg.clip_norm)
                step += 1
                opt.step(_lr_at(cfg, step))
                window.append(value)
                if step % cfg.eval_interval == 0 or step == cfg.max_steps:
                    ppl = evaluate_ppl(model, valid_set, cfg.batch_size)
                    model.train()
                    row = {"step": step, "train_loss": float(np.mean(window)), "valid_ppl": ppl}
                    records.append(row)
                    window = []
                    log.info("step %d train_loss %.4f valid_ppl %.4f", step, row["train_loss"], ppl)
                    if out is not None:
                        writer.writerow([step, repr(row["train_loss"]), repr(ppl)])
                        log_fh.flush()
                    if ppl < best_ppl:
                        best_ppl = ppl
                        best = Checkpoint.from_model(model, step=step, valid_ppl=ppl, optimizer=opt.state())
                        if out is not None:
                            save_checkpoint(best, out / "best.npz")
            epoch += 1
    finally:
        model.eval()
        if out is not None:
            log_fh.close()
    if not records:
        best = Checkpoint.from_model(model, step=step, valid_ppl=evaluate_ppl(model, valid_set, cfg.batch_size),
                                     optimizer=opt.state())
    return TrainResult(best=best, log=records, final_step=step)


def restore_best(model: LGCM, result: TrainResult) -> LGCM:
    load_parameters(model, result.best.params)
    return model


def train_config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
