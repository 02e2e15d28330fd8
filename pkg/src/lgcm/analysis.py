"""Utterance-level attention and gate heatmaps from the global encoder.

Attention: per example, head-averaged inter-attention weights are folded into
an utterance matrix ``a[t][s] = (1/|u_t|) * sum_i sum_j alpha[t,i -> s,j]``
over real tokens, then averaged over examples sharing the same context size.

Gate: ``global_share[layer][t]`` is the mean of ``1 - H`` over the real tokens
and hidden units of utterance t. ``H`` weights the local input, so ``1 - H`` is
the fraction taken from the attended (global) states; ``mean(H)`` is exported
alongside it.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import Variant
from .data import collate, iterate_batches
from .errors import ConfigError, DataError
from .tensor import no_grad


@dataclass
class HeatmapGroup:
    n: int
    count: int
    attention: np.ndarray | None = None  # [layers, N, N]
    global_share: np.ndarray | None = None  # [layers, N]
    local_share: np.ndarray | None = None  # [layers, N]


@dataclass
class HeatmapReport:
    split: str
    groups: dict[int, HeatmapGroup] = field(default_factory=dict)

    def group(self, n: int) -> HeatmapGroup:
        return self.groups[n]


def _collect(model, examples, batch_size: int):
    if not examples:
        raise DataError("cannot build a heatmap from an empty dataset")
    if model.variant is Variant.FLAT_TRANSFORMER or not model.global_encoder.layers:
        raise ConfigError("heatmaps need a model with global encoder layers")
    model.eval()
    with no_grad():
        for chunk in iterate_batches(examples, batch_size, shuffle=False):
            batch = collate(chunk, max_utt_len=model.config.max_utt_len)
            traces: list[dict] = []
            model.encode(batch, traces)
            for b, ex in enumerate(chunk):
                yield len(ex.context), batch.context_mask[b], [{k: v[b] for k, v in t.items()} for t in traces]


def utterance_attention(alpha: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Fold one example's token attention ``[h, N, L, N, L]`` into ``[n, n]`` over real utterances."""
    mean_heads = alpha.mean(axis=0)
    n = int(mask.any(axis=-1).sum())
    out = np.zeros((n, n))
    for t in range(n):
        rows = mean_heads[t][mask[t]]  # [|u_t|, N, L]
        for s in range(n):
            out[t, s] = rows[:, s][:, mask[s]].sum() / rows.shape[0]
    return out


def attention_heatmap(model, examples, batch_size: int = 16, split: str = "valid") -> HeatmapReport:
    sums: dict[int, np.ndarray] = {}
    counts: dict[int, int] = defaultdict(int)
    for n, mask, traces in _collect(model, examples, batch_size):
        if "attention" not in traces[0]:
            raise ConfigError("this variant has no inter-attention weights to aggregate")
        mats = np.stack([utterance_attention(t["attention"], mask) for t in traces])
        sums[n] = sums.get(n, 0) + mats
        counts[n] += 1
    report = HeatmapReport(split)
    for n in sorted(sums):
        report.groups[n] = HeatmapGroup(n, counts[n], attention=sums[n] / counts[n])
    return report


def gate_heatmap(model, examples, batch_size: int = 16, split: str = "valid") -> HeatmapReport:
    sums: dict[int, np.ndarray] = {}
    counts: dict[int, int] = defaultdict(int)
    for n, mask, traces in _collect(model, examples, batch_size):
        if "gate" not in traces[0]:
            raise ConfigError("this variant has no gate activations to aggregate")
        per_layer = []
        for t in traces:
            H = t["gate"]  # [N, L, d]
            per_layer.append([H[u][mask[u]].mean() for u in range(n)])
        sums[n] = sums.get(n, 0) + np.array(per_layer)
        counts[n] += 1
    report = HeatmapReport(split)
    for n in sorted(sums):
        local = sums[n] / counts[n]
        report.groups[n] = HeatmapGroup(n, counts[n], global_share=1.0 - local, local_share=local)
    return report


def combined_report(model, examples, batch_size: int = 16, split: str = "valid") -> HeatmapReport:
    report = attention_heatmap(model, examples, batch_size, split)
    gates = gate_heatmap(model, examples, batch_size, split)
    for n, g in gates.groups.items():
        report.groups[n].global_share = g.global_share
        report.groups[n].local_share = g.local_share
    return report


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csvs(report: HeatmapReport, out_dir) -> list[Path]:
    """One attention CSV per (layer, N) and one gate CSV per N."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for n, g in sorted(report.groups.items()):
        if g.attention is not None:
            for layer, mat in enumerate(g.attention, 1):
                path = out / f"attention_{report.split}_N{n}_layer{layer}.csv"
                with open(path, "w", newline="") as fh:
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow([f"# examples={g.count}"])
                    w.writerow(["t\\s", *[f"u{s + 1}" for s in range(n)]])
                    for t in range(n):
                        w.writerow([f"u{t + 1}", *map(_fmt, mat[t])])
                written.append(path)
        if g.global_share is not None:
            path = out / f"gate_{report.split}_N{n}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow([f"# examples={g.count}; global_share = 1 - mean(H); local_share = mean(H)"])
                w.writerow(["layer", "quantity", *[f"u{t + 1}" for t in range(n)]])
                for layer in range(g.global_share.shape[0]):
                    w.writerow([layer + 1, "global_share", *map(_fmt, g.global_share[layer])])
                    w.writerow([layer + 1, "local_share", *map(_fmt, g.local_share[layer])])
            written.append(path)
    return written


_SHADES = " .:-=+*#%@"


def ascii_heatmap(matrix: np.ndarray, labels=None) -> str:
    """Render values in [0, 1] as shaded cells, one row per line."""
    matrix = np.atleast_2d(matrix)
    labels = labels or [f"u{i + 1}" for i in range(matrix.shape[0])]
    lines = ["     " + " ".join(f"{c + 1:>2}" for c in range(matrix.shape[1]))]
    for label, row in zip(labels, matrix):
        cells = [_SHADES[min(int(v * len(_SHADES)), len(_SHADES) - 1)] * 2 for v in np.clip(row, 0, 1)]
        lines.append(f"{label:>4} " + " ".join(cells))
    return "\n".join(lines)


def render_text(report: HeatmapReport) -> str:
    parts = [f"# heatmaps for split {report.split}"]
    for n, g in sorted(report.groups.items()):
        parts.append(f"## context size N={n} ({g.count} examples)")
        if g.attention is not None:
            for layer, mat in enumerate(g.attention, 1):
                parts.append(f"attention layer {layer} (rows attend to columns)")
                parts.append(ascii_heatmap(mat))
        if g.global_share is not None:
            parts.append("global share 1 - mean(H) (rows = layers, columns = utterances)")
            parts.append(ascii_heatmap(g.global_share, [f"L{i + 1}" for i in range(g.global_share.shape[0])]))
    return "\n".join(parts) + "\n"
