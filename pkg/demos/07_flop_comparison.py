"""
Encoder cost: hierarchical versus flat
======================================

Splitting L context tokens into N utterances shrinks the quadratic attention
term of the local layers by a factor N, and the gate is a quarter of an FFN.
"""

from lgcm.config import LGCMConfig
from lgcm.flops import count_flops

cfg = LGCMConfig.reference_scale(vocab_size=10000)
print(count_flops(cfg, L_total=128, N=4).to_text())
print()

print(f"{'L':>5} {'N':>3} {'LGCM':>16} {'flat':>16} {'ratio':>7}")
for L in (64, 128, 256, 512):
    for N in (1, 2, 4, 8):
        r = count_flops(cfg, L_total=L, N=N)
        print(f"{L:>5} {N:>3} {r.lgcm_encoder:>16,d} {r.flat_encoder:>16,d} {r.lgcm_encoder / r.flat_encoder:>7.3f}")

# unequal utterance lengths are summed exactly
r = count_flops(cfg, lengths=[40, 12, 60, 16])
print("\nunequal lengths:", r.local_self_attention, "vs flat", r.flat_self_attention)

exact = count_flops(cfg, L_total=128, N=4, mode="exact")
print("with output projection and offset bias:", exact.lgcm_encoder, "vs", exact.flat_encoder)
