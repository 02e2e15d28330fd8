"""
Reverse-mode gradients on numpy arrays
======================================

Every model in this package is built from a small set of differentiable
operations. Here we push a tiny computation through them and compare the
tape gradient with central finite differences.
"""

import numpy as np

from lgcm import tensor as T
from lgcm.tensor import Tensor, backward

rng = np.random.default_rng(0)
x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
w = Tensor(rng.normal(size=(4, 2)), requires_grad=True)

# a matmul, a layer norm, a masked softmax, then a scalar
h = T.matmul(x, w)
h = T.layer_norm(h, Tensor(np.ones(2)), Tensor(np.zeros(2)))
mask = np.array([[False, True], [False, False], [False, False]])  # True = excluded
p = T.masked_softmax(h, mask)
loss = T.sum(T.mul(p, p))
backward(loss)

print("loss", loss.item())
print("softmax rows sum to", p.data.sum(-1))
print("masked entry", p.data[0, 1])


def f():
    hh = T.layer_norm(T.matmul(Tensor(x.data), Tensor(w.data)), Tensor(np.ones(2)), Tensor(np.zeros(2)))
    pp = T.masked_softmax(hh, mask).data
    return float((pp * pp).sum())


fd = np.zeros_like(w.data)
for idx in np.ndindex(w.data.shape):
    old = w.data[idx]
    w.data[idx] = old + 1e-6
    hi = f()
    w.data[idx] = old - 1e-6
    lo = f()
    w.data[idx] = old
    fd[idx] = (hi - lo) / 2e-6

print("tape grad\n", w.grad)
print("finite differences\n", fd)
print("max abs diff", np.abs(w.grad - fd).max())

# no_grad records nothing, which is how evaluation and generation run
with T.no_grad():
    y = T.mul(x, 2.0)
print("requires_grad inside no_grad:", y.requires_grad)
