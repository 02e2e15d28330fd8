"""Synthetic dialog corpora with responses fully determined by the context."""

from __future__ import annotations

import json

import numpy as np

from .data import Dialog, Utterance


def copy_task_dialogs(n_dialogs: int = 32, n_words: int = 40, utt_len: int = 3, seed: int = 0) -> list[Dialog]:
    """Three-turn dialogs: A says k distinct words, B reverses them, A repeats the opener.

    Openers are distinct across dialogs, so every (context, response) pair
    is unique and the corpus can be memorized exactly.
    """
    rng = np.random.default_rng(seed)
    words = [f"w{i}" for i in range(n_words)]
    seen: set[tuple[str, ...]] = set()
    dialogs = []
    while len(dialogs) < n_dialogs:
        opener = tuple(words[i] for i in rng.choice(n_words, size=utt_len, replace=False))
        if opener in seen:
            continue
        seen.add(opener)
        dialogs.append(Dialog((
            Utterance("A", opener),
            Utterance("B", opener[::-1]),
            Utterance("A", opener),
        )))
    return dialogs


def to_jsonl(dialogs) -> str:
    lines = []
    for d in dialogs:
        turns = [{"speaker": u.speaker, "text": " ".join(u.tokens)} for u in d.utterances]
        lines.append(json.dumps({"dialog": turns}))
    return "\n".join(lines) + "\n"


def write_jsonl(dialogs, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_jsonl(dialogs))
