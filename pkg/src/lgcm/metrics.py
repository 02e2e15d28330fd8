"""Corpus BLEU-4, NIST-4, METEOR (exact + stem) and ROUGE-L over token sequences.

All scores are on a 0-100 scale. Each corpus is a sequence of
``(hypothesis_tokens, reference_tokens)`` pairs with a single reference.
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass
from functools import lru_cache

from nltk.stem.porter import PorterStemmer

log = logging.getLogger(__name__)

METEOR_NOTE = "METEOR uses exact and Porter-stem matching only; no synonym stage."
_stemmer = PorterStemmer()


def ngrams(tokens, n: int) -> Counter:
    tokens = tuple(tokens)
    return Counter(tokens[i : i + n] for i in range(len(tokens) - n + 1))


def _check(pairs) -> list:
    pairs = list(pairs)
    if not pairs or all(len(h) == 0 for h, _ in pairs):
        log.warning("empty hypothesis corpus; score is 0")
        return []
    return pairs


# BLEU ------------------------------------------------------------------------


@dataclass(frozen=True)
class BleuStats:
    matches: tuple[int, ...]
    totals: tuple[int, ...]
    hyp_len: int
    ref_len: int

    @property
    def precisions(self) -> tuple[float, ...]:
        return tuple(m / t if t else 0.0 for m, t in zip(self.matches, self.totals))

    @property
    def brevity_penalty(self) -> float:
        if self.hyp_len == 0:
            return 0.0
        return 1.0 if self.hyp_len >= self.ref_len else math.exp(1.0 - self.ref_len / self.hyp_len)


def bleu_stats(pairs, max_n: int = 4) -> BleuStats:
    matches, totals = [0] * max_n, [0] * max_n
    hyp_len = ref_len = 0
    for hyp, ref in pairs:
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            h, r = ngrams(hyp, n), ngrams(ref, n)
            matches[n - 1] += sum(min(c, r[g]) for g, c in h.items())
            totals[n - 1] += sum(h.values())
    return BleuStats(tuple(matches), tuple(totals), hyp_len, ref_len)


def bleu4(pairs, smooth: bool = False) -> float:
    """Corpus BLEU-4 without smoothing; zero when any order has no matches.

    ``smooth=True`` adds one to every count above unigrams (diagnostic use).
    """
    pairs = _check(pairs)
    if not pairs:
        return 0.0
    st = bleu_stats(pairs)
    log_p = 0.0
    for n, (m, t) in enumerate(zip(st.matches, st.totals)):
        if smooth and n > 0:
            m, t = m + 1, t + 1
        if m == 0 or t == 0:
            return 0.0
        log_p += math.log(m / t) / 4
    return 100.0 * st.brevity_penalty * math.exp(log_p)


def sentence_bleu4(hyp, ref) -> float:
    return bleu4([(hyp, ref)], smooth=True)


# NIST ------------------------------------------------------------------------

NIST_BETA = math.log(0.5) / math.log(1.5) ** 2  # brevity factor 0.5 at a 2/3 length ratio


def nist_information(references, max_n: int = 4) -> dict:
    """info(w1..wn) = log2(count(w1..wn-1) / count(w1..wn)) over the reference corpus.

    For unigrams the numerator is the number of reference words, so the weight
    is ``-log2`` of the word's relative frequency.
    """
    counts: Counter = Counter()
    words = 0
    for ref in references:
        words += len(ref)
        for n in range(1, max_n + 1):
            counts.update(ngrams(ref, n))
    info = {}
    for gram, c in counts.items():
        prefix = words if len(gram) == 1 else counts[gram[:-1]]
        info[gram] = math.log2(prefix / c)
    return info


def nist4(pairs, max_n: int = 4) -> float:
    pairs = _check(pairs)
    if not pairs:
        return 0.0
    info = nist_information([r for _, r in pairs], max_n)
    score = 0.0
    for n in range(1, max_n + 1):
        gained, total = 0.0, 0
        for hyp, ref in pairs:
            h, r = ngrams(hyp, n), ngrams(ref, n)
            total += sum(h.values())
            gained += sum(min(c, r[g]) * info[g] for g, c in h.items() if g in r)
        if total:
            score += gained / total
    hyp_len = sum(len(h) for h, _ in pairs)
    ref_len = sum(len(r) for _, r in pairs)
    ratio = min(hyp_len / ref_len, 1.0) if ref_len else 1.0
    penalty = math.exp(NIST_BETA * math.log(ratio) ** 2) if ratio > 0 else 0.0
    return 100.0 * score * penalty


# METEOR ----------------------------------------------------------------------

METEOR_ALPHA, METEOR_BETA, METEOR_GAMMA = 0.9, 3.0, 0.5
_SEARCH_LIMIT = 20000


@lru_cache(maxsize=65536)
def stem(word: str) -> str:
    return _stemmer.stem(word)


def count_chunks(alignment) -> int:
    """Chunks are maximal runs adjacent in both hypothesis and reference."""
    pairs = sorted(alignment)
    chunks = 0
    prev = None
    for h, r in pairs:
        if prev is None or h != prev[0] + 1 or r != prev[1] + 1:
            chunks += 1
        prev = (h, r)
    return chunks


def _best_alignment(candidates, fixed, used_ref):
    """Choose one ref position per hypothesis slot: most matches, then fewest chunks.

    ``candidates`` maps hypothesis index -> list of allowed ref indices. Exhaustive
    search when small, otherwise a left-to-right greedy assignment that prefers
    continuing the previous chunk.
    """
    slots = sorted(candidates)
    space = 1
    for h in slots:
        space *= len(candidates[h]) + 1
    if space <= _SEARCH_LIMIT:
        best_key, best = None, list(fixed)
        for choice in itertools.product(*[[None, *candidates[h]] for h in slots]):
            taken = [r for r in choice if r is not None]
            if len(set(taken)) != len(taken) or used_ref & set(taken):
                continue
            align = list(fixed) + [(h, r) for h, r in zip(slots, choice) if r is not None]
            key = (-len(align), count_chunks(align), tuple(sorted(align)))
            if best_key is None or key < best_key:
                best_key, best = key, align
        return best
    align = list(fixed)
    taken = set(used_ref)
    lookup = dict(fixed)
    for h in slots:
        free = [r for r in candidates[h] if r not in taken]
        if not free:
            continue
        want = lookup.get(h - 1)
        r = want + 1 if want is not None and want + 1 in free else free[0]
        align.append((h, r))
        taken.add(r)
        lookup[h] = r
    return align


def meteor_alignment(hyp, ref, use_stems: bool = True) -> list[tuple[int, int]]:
    hyp, ref = list(hyp), list(ref)
    # stage 1: exact
    exact = {h: [r for r, rw in enumerate(ref) if rw == hw] for h, hw in enumerate(hyp)}
    exact = {h: rs for h, rs in exact.items() if rs}
    align = _best_alignment(exact, [], set())
    if not use_stems:
        return align
    # stage 2: Porter stems over what stage 1 left unaligned
    done_h = {h for h, _ in align}
    done_r = {r for _, r in align}
    stems_r = [stem(w) for w in ref]
    staged = {}
    for h, hw in enumerate(hyp):
        if h in done_h:
            continue
        rs = [r for r in range(len(ref)) if r not in done_r and stems_r[r] == stem(hw)]
        if rs:
            staged[h] = rs
    if not staged:
        return align
    return _best_alignment(staged, align, done_r)


def meteor_sentence(hyp, ref, use_stems: bool = True) -> float:
    if not hyp or not ref:
        return 0.0
    align = meteor_alignment(hyp, ref, use_stems)
    m = len(align)
    if m == 0:
        return 0.0
    precision, recall = m / len(hyp), m / len(ref)
    fmean = precision * recall / (METEOR_ALPHA * precision + (1 - METEOR_ALPHA) * recall)
    penalty = METEOR_GAMMA * (count_chunks(align) / m) ** METEOR_BETA
    return fmean * (1.0 - penalty)


def meteor(pairs, use_stems: bool = True) -> float:
    """Mean sentence METEOR over the corpus."""
    pairs = _check(pairs)
    if not pairs:
        return 0.0
    return 100.0 * sum(meteor_sentence(h, r, use_stems) for h, r in pairs) / len(pairs)


# ROUGE-L ---------------------------------------------------------------------

ROUGE_BETA = 1.2


def lcs_length(a, b) -> int:
    a, b = list(a), list(b)
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l_sentence(hyp, ref, beta: float = ROUGE_BETA) -> float:
    if not hyp or not ref:
        return 0.0
    lcs = lcs_length(hyp, ref)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(hyp), lcs / len(ref)
    return (1 + beta**2) * p * r / (r + beta**2 * p)


def rouge_l(pairs, beta: float = ROUGE_BETA) -> float:
    pairs = _check(pairs)
    if not pairs:
        return 0.0
    return 100.0 * sum(rouge_l_sentence(h, r, beta) for h, r in pairs) / len(pairs)


# report ----------------------------------------------------------------------


@dataclass
class MetricReport:
    ppl: float | None
    bleu4: float
    nist4: float
    meteor: float
    rouge_l: float
    pairs: int = 0

    def to_text(self) -> str:
        lines = [f"# {METEOR_NOTE}", f"# pairs={self.pairs}"]
        for key, value in asdict(self).items():
            if key != "pairs":
                lines.append(f"{key:8s} {'n/a' if value is None else f'{value:.4f}'}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["# " + METEOR_NOTE])
        row = asdict(self)
        writer.writerow(list(row))
        writer.writerow(["" if v is None else repr(v) for v in row.values()])
        return buf.getvalue()


def evaluate_pairs(pairs, ppl: float | None = None) -> MetricReport:
    pairs = [(list(h), list(r)) for h, r in pairs]
    return MetricReport(ppl=ppl, bleu4=bleu4(pairs), nist4=nist4(pairs), meteor=meteor(pairs),
                        rouge_l=rouge_l(pairs), pairs=len(pairs))
