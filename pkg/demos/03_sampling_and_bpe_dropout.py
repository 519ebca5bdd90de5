"""
Stochastic segmentation: score noise vs BPE dropout
===================================================

Both tokenizers can sample alternative segmentations of the same word, a
standard regularizer for sequence models. The triplet tokenizer perturbs
every edge score with |w|*exp(eps), eps ~ N(0, sigma^2); the BPE baseline
skips individual merge occurrences with a dropout probability.
"""

from collections import Counter

import numpy as np

from vqtok.bpe import encode_bpe, train_bpe
from vqtok.corpus import BoundedWord, WordFrequencyList
from vqtok.tokenizer import SAMPLING, ScoreParams, sample_tokenizations
from vqtok.vocab import Vocabulary, VocabularyEntry, build_dawg

# --- score-noise sampling on a near-tie vocabulary -------------------------
rows = [
    (b"un", True, False, -1.0),
    (b"der", False, False, -1.0),
    (b"dog", False, True, -1.0),
    (b"underdog", True, True, -5.1),
    (b"under", True, False, -2.2),
]
for value in set(b"underdog"):
    for bow, eow in ((True, True), (True, False), (False, True), (False, False)):
        rows.append((bytes([value]), bow, eow, -4.0))
entries = [
    VocabularyEntry(BoundedWord(c, b, e), (i % 16, (i // 16) % 16, i // 256), lp)
    for i, (c, b, e, lp) in enumerate(rows)
]
vocab = Vocabulary(entries, 16)
dawg = build_dawg(vocab)

params = ScoreParams(alpha_split=0.1, sigma_sample=0.05, mode=SAMPLING)
rng = np.random.default_rng(11)
word = BoundedWord.full(b"underdog")
outcomes = Counter(
    " | ".join(p.word.content.decode() for p in s.pieces)
    for s in sample_tokenizations(word, vocab, dawg, params, rng, 200)
)
print("triplet tokenizer, sigma=0.05, 200 samples:")
for segmentation, count in outcomes.most_common():
    print(f"  {count:>4}  {segmentation}")

# --- BPE dropout ------------------------------------------------------------
flist = WordFrequencyList({b"underdog": 4, b"under": 8, b"dog": 6, b"thunder": 2})
table = train_bpe(flist, 290)
rng = np.random.default_rng(5)
outcomes = Counter(
    " | ".join(bytes(v for v in piece if v < 256).decode() or "<mark>" for piece in
               encode_bpe(b"underdog", table, dropout_p=0.2, rng=rng))
    for _ in range(200)
)
print("\nBPE, dropout=0.2, 200 samples:")
for segmentation, count in outcomes.most_common(6):
    print(f"  {count:>4}  {segmentation}")
