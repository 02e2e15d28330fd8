"""
Ablations: drop inter-attention, drop the gate, or flatten the context
======================================================================

All four variants share the embeddings and decoder; they differ only in how
the context is encoded. Parameter counts follow from the layer shapes.
"""

from lgcm import data, fixtures
from lgcm.config import LGCMConfig, Variant
from lgcm.model import LGCM, expected_parameter_count
from lgcm.trainer import TrainConfig, evaluate_ppl, train

dialogs = fixtures.copy_task_dialogs(n_dialogs=32)
vocab = data.build_vocab(dialogs)
examples = data.make_dataset(dialogs, n_max=7, vocab=vocab)

for variant in Variant:
    cfg = LGCMConfig(vocab_size=len(vocab), d=32, heads=4, n_local=2, n_global=2, n_dec=2, variant=variant)
    model = LGCM(cfg)
    assert model.num_parameters() == expected_parameter_count(cfg)
    before = evaluate_ppl(model, examples)
    result = train(model, examples, examples, TrainConfig(lr=2e-3, max_steps=120, eval_interval=40))
    print(f"{variant.value:<20} params {model.num_parameters():>7,d}  PPL {before:6.2f} -> {result.best.valid_ppl:6.3f}")
