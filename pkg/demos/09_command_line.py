"""
The same workflow through the ``lgcm`` command
==============================================

Each step below is what ``lgcm <command> ...`` does from a shell; calling
``main`` keeps the demo in one process.
"""

import json
import tempfile
from pathlib import Path

from lgcm import fixtures
from lgcm.cli import main

root = Path(tempfile.mkdtemp())
dialogs = fixtures.copy_task_dialogs(n_dialogs=40, utt_len=4, seed=2)
fixtures.write_jsonl(dialogs[:32], root / "train.jsonl")
fixtures.write_jsonl(dialogs[32:], root / "test.jsonl")

(root / "run.ini").write_text("""\
[run]
seed = 0
out_dir = out

[data]
train = train.jsonl
valid = train.jsonl
test = test.jsonl
vocab = vocab.txt
min_freq = 1

[model]
d = 32
heads = 4
n_local = 1
n_global = 2
n_dec = 1

[train]
lr = 2e-3
batch_size = 16
max_steps = 100
eval_interval = 50
""")

cfg, ckpt = str(root / "run.ini"), str(root / "out" / "best.npz")
main(["build-vocab", "--data", str(root / "train.jsonl"), "--min-freq", "1", "--out", str(root / "vocab.txt")])
main(["train", "--config", cfg])
main(["eval", "--config", cfg, "--checkpoint", ckpt, "--split", "test"])

(root / "ctx.jsonl").write_text(json.dumps({"dialog": [{"speaker": "A", "text": "w3 w9 w1 w7"}]}) + "\n")
main(["generate", "--checkpoint", ckpt, "--context-file", str(root / "ctx.jsonl")])
main(["inspect", "--config", cfg, "--checkpoint", ckpt, "--split", "test", "--out", str(root / "heatmaps")])
main(["flops", "--config", cfg, "--L", "64", "--N", "4"])

# a missing file is a data error (exit code 2)
print("exit code:", main(["generate", "--checkpoint", str(root / "missing.npz"), "--context-file", "x"]))
print("outputs under", root)
