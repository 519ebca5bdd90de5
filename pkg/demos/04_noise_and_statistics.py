"""
Character noise and tokenizer statistics
========================================

The noise generator perturbs characters (delete / case flip / repeat) with a
set probability; the statistics helpers measure splits per word across a
penalty grid and per-channel index usage entropy, the two tokenizer-level
views used to compare segmenters.
"""

import numpy as np

from vqtok.analysis import NoiseConfig, index_histogram, perturb, splits_per_word
from vqtok.corpus import BoundedWord
from vqtok.tokenizer import ScoreParams, tokenize_word
from vqtok.vocab import Vocabulary, VocabularyEntry, build_dawg

# --- noise ------------------------------------------------------------------
text = "Tokenizers should survive Noisy, REAL-world text."
rng = np.random.default_rng(3)
for p in (0.05, 0.2, 0.5):
    print(f"p={p:>4}: {perturb(text, NoiseConfig(p), rng)}")

# --- splits per word over a penalty grid -------------------------------------
rows = [(b"resting", True, True, -2.0), (b"rest", True, False, -1.0), (b"ing", False, True, -0.6),
        (b"re", True, False, -0.7), (b"sting", False, True, -1.1)]
for value in set(b"restingzone"):
    for bow, eow in ((True, True), (True, False), (False, True), (False, False)):
        rows.append((bytes([value]), bow, eow, -2.4))
entries = [
    VocabularyEntry(BoundedWord(c, b, e), (i % 16, (i // 16) % 16, i // 256), lp)
    for i, (c, b, e, lp) in enumerate(rows)
]
vocab = Vocabulary(entries, 16)
dawg = build_dawg(vocab)

corpus = [b"resting", b"rest", b"zone", b"sting"]


def make_tokenizer(alpha):
    params = ScoreParams(alpha_split=alpha)
    return lambda word: tokenize_word(BoundedWord.full(word), vocab, dawg, params).pieces


table = splits_per_word(make_tokenizer, corpus, [0.0, 0.1, 0.5, 1.0, 5.0])
print("\nmean pieces per word:")
for alpha, mean in table.items():
    print(f"  alpha={alpha:<4} -> {mean:.2f}")

# --- index usage ------------------------------------------------------------
triplets = [
    piece.triplet
    for word in corpus
    for piece in tokenize_word(BoundedWord.full(word), vocab, dawg, ScoreParams()).pieces
]
hist = index_histogram(triplets, 16)
print("\nper-channel usage entropy (normalized):",
      [f"{h:.2f}" for h in hist.normalized_entropies])
