"""
From JSONL dialogs to padded batches
====================================

Dialogs are alternating turns between speakers A and B. Each turn after
the first becomes a response, with up to ``n_max`` earlier turns as context.
"""

import tempfile
from pathlib import Path

from lgcm import data, fixtures

workdir = Path(tempfile.mkdtemp())
corpus = workdir / "toy.jsonl"
corpus.write_text(
    '{"dialog": [{"speaker": "A", "text": "Hi, how are you?"}, {"speaker": "B", "text": "Fine, thanks!"},'
    ' {"speaker": "A", "text": "Glad to hear it."}]}\n'
    '{"dialog": [{"speaker": "B", "text": "Are you there?"}, {"speaker": "A", "text": "Yes, I am."}]}\n'
)

dialogs = data.load_jsonl(corpus)
print(data.tokenize("Hi, how are you?"))

vocab = data.build_vocab(dialogs, min_freq=1)
print("V =", len(vocab), vocab.itos[:10])

examples = data.make_dataset(dialogs, n_max=7, vocab=vocab)
for ex in examples:
    ctx = [" ".join(vocab.decode(u)) for u in ex.context]
    print(ctx, "->", " ".join(vocab.decode(ex.response)), "role", ex.response_role)

batch = data.collate(examples)
print("context ids", batch.context_ids.shape)  # [B, N, L]
print("context mask (True = real token)\n", batch.context_mask.astype(int))
print("response in \n", batch.response_in)
print("response out\n", batch.response_out)

# the synthetic memorization corpus used by the learning check
copy = fixtures.copy_task_dialogs(n_dialogs=3, seed=1)
print(fixtures.to_jsonl(copy))
