"""
Scoring generated responses
===========================

BLEU-4, NIST-4, METEOR and ROUGE-L over (hypothesis, reference) token lists,
all on a 0-100 scale.
"""

from lgcm import metrics

pairs = [
    ("the cat sat on the mat".split(), "the cat sat on a mat".split()),
    ("i am running late today".split(), "i run late today".split()),
    ("see you tomorrow".split(), "see you tomorrow then".split()),
]

stats = metrics.bleu_stats(pairs)
print("clipped n-gram matches", stats.matches, "of", stats.totals)
print("brevity penalty", round(stats.brevity_penalty, 4))
print(metrics.evaluate_pairs(pairs).to_text())

# the stem stage lets "running" align with "run"
hyp, ref = "running fast".split(), "run fast".split()
print("METEOR with stems", metrics.meteor([(hyp, ref)]))
print("METEOR exact only", metrics.meteor([(hyp, ref)], use_stems=False))

print("LCS of 'a c' and 'a b c':", metrics.lcs_length("ac", "abc"))
print("ROUGE-L", metrics.rouge_l([(["a", "c"], ["a", "b", "c"])]))
