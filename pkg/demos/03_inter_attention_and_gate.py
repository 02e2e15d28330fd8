"""
Attention across utterances, and the gate that fuses it
=======================================================

Each token of utterance t attends jointly over the tokens of every context
utterance s. A learned key vector picked by the offset s - t tells the
attention how far apart the two utterances are. A sigmoid gate then mixes
the utterance's own (local) states with the attended (global) ones.
"""

import numpy as np

from lgcm.global_encoder import Gate, InterAttention, utterance_offsets
from lgcm.tensor import Tensor

rng = np.random.default_rng(0)
n_max, d, heads = 3, 8, 2
print("offset table rows used for 3 utterances:\n", utterance_offsets(3, n_max))

attention = InterAttention(d, heads, n_max, rng)
x = rng.normal(size=(1, 3, 4, d))  # one example, 3 utterances of 4 tokens
pad = np.zeros((1, 3, 4), bool)
pad[0, 2, 2:] = True  # last utterance has 2 real tokens

trace = {}
out = attention.attend(Tensor(x), pad, trace)
alpha = trace["attention"]  # [B, heads, N, L, N, L]
print("attention shape", alpha.shape)
print("per-query totals (all 1):", np.round(alpha[0, 0].sum(axis=(-2, -1)), 12)[0])
print("weight from utterance 1 token 1 to each utterance:", alpha[0].mean(0)[0, 0].sum(-1))

# moving utterances around changes the result only through the offset table
attention.relative_keys.data[:] = 0.0
a = attention.attend(Tensor(x[:, [0, 1]]), pad[:, [0, 1]]).data
b = attention.attend(Tensor(x[:, [1, 0]]), pad[:, [1, 0]]).data
print("swap equivariant with zero offsets:", np.abs(a[:, [1, 0]] - b).max())

gate = Gate(d, rng)
local, glob = rng.normal(size=(1, 3, 4, d)), out.data
for bias in (40.0, 0.0, -40.0):
    gate.fuse.weight.data[:] = 0.0
    gate.fuse.bias.data[:] = bias
    trace = {}
    fused = gate.fuse_states(Tensor(local), Tensor(glob), trace).data
    print(f"bias {bias:+.0f}: mean H = {trace['gate'].mean():.3f}, "
          f"|fused - local| = {np.abs(fused - local).max():.2e}, |fused - global| = {np.abs(fused - glob).max():.2e}")
