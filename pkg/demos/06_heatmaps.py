"""
Which utterances does the encoder look at?
==========================================

Token-level inter-attention is folded into an utterance-by-utterance matrix
and averaged over examples with the same context size. The gate export
reports how much of each utterance's fused state comes from the global side.
"""

import tempfile
from pathlib import Path

from lgcm import analysis, data, fixtures
from lgcm.config import LGCMConfig
from lgcm.model import LGCM
from lgcm.trainer import TrainConfig, restore_best, train

dialogs = fixtures.copy_task_dialogs(n_dialogs=24, seed=5)
vocab = data.build_vocab(dialogs)
examples = data.make_dataset(dialogs, n_max=7, vocab=vocab)

model = LGCM(LGCMConfig(vocab_size=len(vocab), d=32, heads=4, n_local=1, n_global=2, n_dec=1))
restore_best(model, train(model, examples, examples, TrainConfig(lr=2e-3, max_steps=150, eval_interval=50)))

report = analysis.combined_report(model, examples, split="fixture")
print(analysis.render_text(report))

g = report.group(2)
print("layer 1 attention (rows sum to 1):\n", g.attention[0].round(3))
print("global share per layer and utterance:\n", g.global_share.round(3))

out = Path(tempfile.mkdtemp())
for path in analysis.write_csvs(report, out):
    print("wrote", path.name)
