"""
Tokenization as shortest-path search
====================================

Each vocabulary subword is an edge in a lattice over the word's symbol
positions; the optimal tokenization is the cheapest path from start to end.
The split penalty added to every edge trades segment count against fit: a
small penalty favors fine segmentations, a large one merges pieces.
"""

from vqtok.corpus import BoundedWord
from vqtok.tokenizer import ScoreParams, tokenize_word
from vqtok.vocab import Vocabulary, VocabularyEntry, build_dawg

# A hand-built vocabulary: scores are -log p, lower is better. The whole
# word is known but expensive; the morpheme-like pieces are cheap.
rows = [
    (b"tokenization", True, True, -9.0),
    (b"token", True, False, -2.0),
    (b"ization", False, True, -2.5),
    (b"iza", False, False, -1.8),
    (b"tion", False, True, -1.2),
]
# single-byte pieces guarantee every path exists
for value in set(b"tokenization"):
    for bow, eow in ((True, True), (True, False), (False, True), (False, False)):
        rows.append((bytes([value]), bow, eow, -3.5))

entries = [
    VocabularyEntry(BoundedWord(content, bow, eow), (i % 16, (i // 16) % 16, i // 256), logprob)
    for i, (content, bow, eow, logprob) in enumerate(rows)
]
vocab = Vocabulary(entries, 16)
dawg = build_dawg(vocab)

word = BoundedWord.full(b"tokenization")
for alpha in (0.0, 0.5, 2.0, 8.0):
    result = tokenize_word(word, vocab, dawg, ScoreParams(alpha_split=alpha))
    pieces = " | ".join(p.word.content.decode() for p in result.pieces)
    print(f"alpha={alpha:>4}: {len(result.pieces)} pieces  {pieces:<40} score={result.total_score:.2f}")

# The piece count never increases with the penalty: every extra unit of
# alpha charges longer paths more, so coarser segmentations take over.
