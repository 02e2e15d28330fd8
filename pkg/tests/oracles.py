"""Straight-line numpy re-implementations used as independent test oracles.

Everything here works on one example at a time, on real tokens only (no
padding), with explicit loops over heads, queries and keys. Parameters come
in as the flat ``{name: array}`` dict from ``model.named_parameters()``.
"""

import math

import numpy as np

ROLE = {"A": 0, "B": 1}


def layer_norm(x, gain, bias, eps=1e-5):
    mu = x.mean(-1, keepdims=True)
    var = ((x - mu) ** 2).mean(-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def norm(x, p, prefix):
    return layer_norm(x, p[prefix + ".gain"], p[prefix + ".bias"])


def linear(x, p, prefix):
    return x @ p[prefix + ".weight"] + p[prefix + ".bias"]


def softmax(z, excluded=None):
    z = np.array(z, dtype=float)
    if excluded is not None:
        z = np.where(excluded, -np.inf, z)
    e = np.exp(z - z.max())
    return e / e.sum()


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def mha(xq, xkv, p, prefix, heads, causal=False):
    q = linear(xq, p, prefix + ".query")
    k = linear(xkv, p, prefix + ".key")
    v = linear(xkv, p, prefix + ".value")
    d = q.shape[1]
    dh = d // heads
    out = np.zeros_like(q)
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        for i in range(len(xq)):
            scores = [q[i, sl] @ k[j, sl] / math.sqrt(dh) for j in range(len(xkv))]
            excluded = np.arange(len(xkv)) > i if causal else None
            w = softmax(scores, excluded)
            out[i, sl] = sum(w[j] * v[j, sl] for j in range(len(xkv)))
    return linear(out, p, prefix + ".output")


def ffn(x, p, prefix):
    return linear(np.maximum(linear(x, p, prefix + ".inner"), 0.0), p, prefix + ".outer")


def encoder_layer(x, p, prefix, heads):
    x = norm(x + mha(x, x, p, prefix + ".attention", heads), p, prefix + ".norm1")
    return norm(x + ffn(x, p, prefix + ".ffn"), p, prefix + ".norm2")


def inter_attention_raw(utts, p, prefix, heads, n_max):
    """Attention output (after the output projection, before residual/LN) per utterance.

    Also returns alpha[t][i] as a list over s of arrays [h, L_s].
    """
    q = [linear(c, p, prefix + ".query") for c in utts]
    k = [linear(c, p, prefix + ".key") for c in utts]
    v = [linear(c, p, prefix + ".value") for c in utts]
    rel = p[prefix + ".relative_keys"]
    d = utts[0].shape[1]
    dh = d // heads
    outs, alphas = [], []
    for t in range(len(utts)):
        out_t = np.zeros((len(utts[t]), d))
        alpha_t = []
        for i in range(len(utts[t])):
            alpha_ti = [np.zeros((heads, len(u))) for u in utts]
            for h in range(heads):
                sl = slice(h * dh, (h + 1) * dh)
                keys = []
                for s in range(len(utts)):
                    a = rel[s - t + n_max - 1]
                    for j in range(len(utts[s])):
                        keys.append((s, j, q[t][i, sl] @ (k[s][j, sl] + a) / math.sqrt(dh)))
                w = softmax([e for _, _, e in keys])
                for (s, j, _), wt in zip(keys, w):
                    alpha_ti[s][h, j] = wt
                    out_t[i, sl] += wt * v[s][j, sl]
            alpha_t.append(alpha_ti)
        outs.append(linear(out_t, p, prefix + ".output"))
        alphas.append(alpha_t)
    return outs, alphas


def gate_pre_norm(local, glob, p, prefix):
    H = sigmoid(np.concatenate([local, glob], axis=-1) @ p[prefix + ".fuse.weight"] + p[prefix + ".fuse.bias"])
    return (1 - H) * glob + H * local, H


def global_layer(utts, p, prefix, heads, n_max, variant="LGCM"):
    if variant == "NO_INTER_ATTENTION":
        attended = [norm(c + mha(c, c, p, prefix + ".attention.attention", heads), p, prefix + ".attention.norm")
                    for c in utts]
    else:
        raw, _ = inter_attention_raw(utts, p, prefix + ".attention", heads, n_max)
        attended = [norm(c + r, p, prefix + ".attention.norm") for c, r in zip(utts, raw)]
    if variant == "NO_GATE":
        return [norm(C + ffn(C, p, prefix + ".fusion.ffn"), p, prefix + ".fusion.norm") for C in attended]
    fused = [gate_pre_norm(c, C, p, prefix + ".fusion")[0] for c, C in zip(utts, attended)]
    return [norm(f, p, prefix + ".fusion.norm") for f in fused]


def embed(ids, role, p):
    return p["embeddings.token"][list(ids)] + p["embeddings.position"][: len(ids)] + p["embeddings.role"][role]


def encode(example, p, cfg):
    """Context memory rows (real tokens only, utterances concatenated)."""
    heads = cfg.heads
    utts = [embed(u, r, p) for u, r in zip(example.context, example.context_roles)]
    variant = cfg.variant.value
    if variant == "FLAT_TRANSFORMER":
        x = np.concatenate([u + p["embeddings.utterance_position"][t] for t, u in enumerate(utts)])
        for layer in range(cfg.n_flat):
            x = encoder_layer(x, p, f"flat_encoder.{layer}", heads)
        return x
    for layer in range(cfg.n_local):
        utts = [encoder_layer(u, p, f"local_encoder.layers.{layer}", heads) for u in utts]
    if cfg.n_global:
        utts = [u + p["embeddings.utterance_position"][t] for t, u in enumerate(utts)]
    for layer in range(cfg.n_global):
        utts = global_layer(utts, p, f"global_encoder.layers.{layer}", heads, cfg.n_max, variant)
    return np.concatenate(utts)


def decoder_logits(example, p, cfg, memory=None):
    memory = encode(example, p, cfg) if memory is None else memory
    y = embed(example.response[:-1], example.response_role, p)
    for layer in range(cfg.n_dec):
        pre = f"decoder.layers.{layer}"
        y = norm(y + mha(y, y, p, pre + ".self_attention", cfg.heads, causal=True), p, pre + ".norm1")
        y = norm(y + mha(y, memory, p, pre + ".cross_attention", cfg.heads), p, pre + ".norm2")
        y = norm(y + ffn(y, p, pre + ".ffn"), p, pre + ".norm3")
    return y @ p["embeddings.token"].T


def response_nll(example, p, cfg):
    logits = decoder_logits(example, p, cfg)
    total = 0.0
    for row, target in zip(logits, example.response[1:]):
        total -= row[target] - math.log(np.exp(row - row.max()).sum()) - row.max()
    return total
