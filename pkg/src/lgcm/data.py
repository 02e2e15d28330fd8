"""Corpus ingestion, tokenization, vocabulary, context windows and batching.

Corpus files are JSON lines, one dialog per line::

    {"dialog": [{"speaker": "A", "text": "hi there"}, {"speaker": "B", "text": "hello!"}]}
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

PAD, BOS, EOS, UNK = "[pad]", "[bos]", "[eos]", "[unk]"
SPECIALS = (PAD, BOS, EOS, UNK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = range(4)
ROLES = {"A": 0, "B": 1}

_TOKEN = re.compile(r"\w+|[^\w\s]")
_NO_SPACE_BEFORE = set(".,!?;:)]}%'")
_NO_SPACE_AFTER = set("([{'$")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, and split every punctuation character off."""
    return _TOKEN.findall(text.lower())


def detokenize(tokens) -> str:
    out = ""
    for tok in tokens:
        if out and tok not in _NO_SPACE_BEFORE and out[-1] not in _NO_SPACE_AFTER:
            out += " "
        out += tok
    return out


def normalize_text(text: str) -> str:
    return " ".join(text.lower().split())


@dataclass(frozen=True)
class Utterance:
    speaker: str
    tokens: tuple[str, ...]


@dataclass(frozen=True)
class Dialog:
    utterances: tuple[Utterance, ...]

    def __len__(self) -> int:
        return len(self.utterances)


@dataclass(frozen=True)
class TrainingExample:
    """Token ids include the leading [bos] and trailing [eos]."""

    context: tuple[tuple[int, ...], ...]
    context_roles: tuple[int, ...]
    response: tuple[int, ...]
    response_role: int


def _validate(utterances: list[Utterance], where: str, min_turns: int) -> None:
    if len(utterances) < min_turns:
        raise DataError(f"{where}: a dialog needs at least {min_turns} utterance(s)")
    for prev, cur in zip(utterances, utterances[1:]):
        if prev.speaker == cur.speaker:
            raise DataError(f"{where}: speakers must alternate, got {prev.speaker!r} twice in a row")


def parse_dialog(record, where: str = "record", min_turns: int = 2) -> Dialog:
    try:
        turns = record["dialog"]
        utterances = []
        for turn in turns:
            speaker = turn["speaker"]
            if speaker not in ROLES:
                raise DataError(f"{where}: unknown speaker {speaker!r}")
            utterances.append(Utterance(speaker, tuple(tokenize(turn["text"]))))
    except (KeyError, TypeError) as exc:
        raise DataError(f"{where}: malformed dialog record ({exc!r})") from exc
    _validate(utterances, where, min_turns)
    return Dialog(tuple(utterances))


def load_jsonl(path, min_turns: int = 2) -> list[Dialog]:
    """Training corpora need two turns per dialog; a generation context needs one."""
    dialogs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            dialogs.append(parse_dialog(record, f"{path}:{lineno}", min_turns))
    return dialogs


class Vocabulary:
    def __init__(self, tokens):
        tokens = list(tokens)
        if tuple(tokens[:4]) != SPECIALS:
            raise DataError(f"vocabulary must start with {SPECIALS}")
        if len(set(tokens)) != len(tokens):
            raise DataError("vocabulary contains duplicate tokens")
        self.itos = tokens
        self.stoi = {tok: i for i, tok in enumerate(tokens)}

    def __len__(self) -> int:
        return len(self.itos)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def lookup(self, idx: int) -> str:
        return self.itos[idx]

    def encode_token(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def encode(self, tokens) -> tuple[int, ...]:
        """Word tokens to ids wrapped in [bos] ... [eos]."""
        return (BOS_ID, *(self.encode_token(t) for t in tokens), EOS_ID)

    def decode(self, ids, strip_specials: bool = True) -> list[str]:
        out = []
        for i in ids:
            if strip_specials and i in (PAD_ID, BOS_ID, EOS_ID):
                continue
            out.append(self.itos[i])
        return out

    def save(self, path) -> None:
        Path(path).write_text("".join(tok + "\n" for tok in self.itos), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(lines)


def token_counts(dialogs) -> Counter:
    return Counter(tok for d in dialogs for u in d.utterances for tok in u.tokens)


def build_vocab(dialogs, min_freq: int = 2) -> Vocabulary:
    """Specials first, then tokens with count >= min_freq by (count desc, token asc)."""
    if not dialogs:
        raise DataError("cannot build a vocabulary from an empty corpus")
    counts = token_counts(dialogs)
    kept = sorted((tok for tok, c in counts.items() if c >= min_freq and tok not in SPECIALS),
                  key=lambda tok: (-counts[tok], tok))
    return Vocabulary([*SPECIALS, *kept])


def make_examples(dialog: Dialog, n_max: int, vocab: Vocabulary) -> list[TrainingExample]:
    """One example per turn t >= 2 whose context is the preceding ``n_max`` turns."""
    ids = [vocab.encode(u.tokens) for u in dialog.utterances]
    roles = [ROLES[u.speaker] for u in dialog.utterances]
    examples = []
    for t in range(1, len(ids)):
        lo = max(0, t - n_max)
        examples.append(TrainingExample(tuple(ids[lo:t]), tuple(roles[lo:t]), ids[t], roles[t]))
    return examples


def make_dataset(dialogs, n_max: int, vocab: Vocabulary) -> list[TrainingExample]:
    return [ex for d in dialogs for ex in make_examples(d, n_max, vocab)]


@dataclass
class Batch:
    """Padded arrays for a set of examples.

    Masks are True on real tokens and False on padding. ``response_in`` is
    [bos]+content and ``response_out`` is content+[eos]; position i of the
    input predicts position i of the output.
    """

    context_ids: np.ndarray  # [B, N, L]
    context_mask: np.ndarray  # [B, N, L]
    context_roles: np.ndarray  # [B, N]
    token_positions: np.ndarray  # [B, N, L]
    utterance_positions: np.ndarray  # [B, N]
    utterance_mask: np.ndarray  # [B, N]
    response_in: np.ndarray  # [B, R]
    response_out: np.ndarray  # [B, R]
    response_mask: np.ndarray  # [B, R]
    response_role: np.ndarray  # [B]

    @property
    def size(self) -> int:
        return self.context_ids.shape[0]

    @property
    def num_targets(self) -> int:
        return int(self.response_mask.sum())


def truncate(ids, max_len: int) -> tuple[int, ...]:
    if len(ids) <= max_len:
        return tuple(ids)
    log.warning("truncating utterance of %d tokens to %d", len(ids), max_len)
    return (*ids[: max_len - 1], EOS_ID)


def collate(examples, vocab: Vocabulary | None = None, max_utt_len: int = 32) -> Batch:
    if not examples:
        raise DataError("cannot collate an empty list of examples")
    pad = PAD_ID if vocab is None else vocab.stoi[PAD]
    contexts = [[truncate(u, max_utt_len) for u in ex.context] for ex in examples]
    responses = [truncate(ex.response, max_utt_len) for ex in examples]
    B = len(examples)
    N = max(len(c) for c in contexts)
    L = max(len(u) for c in contexts for u in c)
    R = max(len(r) for r in responses) - 1

    context_ids = np.full((B, N, L), pad, dtype=np.int64)
    context_mask = np.zeros((B, N, L), dtype=bool)
    context_roles = np.zeros((B, N), dtype=np.int64)
    utterance_mask = np.zeros((B, N), dtype=bool)
    response_in = np.full((B, R), pad, dtype=np.int64)
    response_out = np.full((B, R), pad, dtype=np.int64)
    response_mask = np.zeros((B, R), dtype=bool)
    for b, (ex, ctx, resp) in enumerate(zip(examples, contexts, responses)):
        for n, utt in enumerate(ctx):
            context_ids[b, n, : len(utt)] = utt
            context_mask[b, n, : len(utt)] = True
        context_roles[b, : len(ctx)] = ex.context_roles
        utterance_mask[b, : len(ctx)] = True
        response_in[b, : len(resp) - 1] = resp[:-1]
        response_out[b, : len(resp) - 1] = resp[1:]
        response_mask[b, : len(resp) - 1] = True
    return Batch(
        context_ids=context_ids,
        context_mask=context_mask,
        context_roles=context_roles,
        token_positions=np.broadcast_to(np.arange(L), (B, N, L)).copy(),
        utterance_positions=np.broadcast_to(np.arange(N), (B, N)).copy(),
        utterance_mask=utterance_mask,
        response_in=response_in,
        response_out=response_out,
        response_mask=response_mask,
        response_role=np.array([ex.response_role for ex in examples], dtype=np.int64),
    )


def iterate_batches(examples, batch_size: int, seed: int = 0, epoch: int = 0, shuffle: bool = True):
    """Yield lists of examples; the order depends only on (seed, epoch)."""
    order = np.arange(len(examples))
    if shuffle:
        order = np.random.default_rng([seed, epoch]).permutation(len(examples))
    for start in range(0, len(order), batch_size):
        yield [examples[i] for i in order[start : start + batch_size]]
