"""
End-to-end pipeline on a miniature corpus
=========================================

Extract a word-frequency list, train the triplet auto-encoder at desk scale,
decode its static vocabulary, and tokenize new text with shortest-path
search. The corpus is ten stems crossed with four suffixes, so the model
sees real subword structure. Takes a few minutes on a laptop CPU.
"""

import numpy as np

from vqtok import detokenize, extract_frequencies, tokenize_text, train
from vqtok.autoencoder import ModelConfig
from vqtok.tokenizer import ScoreParams
from vqtok.vocab import build_dawg, build_vocabulary

stems = ["rest", "play", "jump", "walk", "turn", "lock", "paint", "farm", "light", "water"]
suffixes = ["", "s", "ing", "ed"]
words = [stem + suffix for stem in stems for suffix in suffixes]

rng = np.random.default_rng(0)
tokens = [words[i] for i in rng.integers(0, len(words), size=1200)]
corpus = "\n".join(" ".join(tokens[i : i + 10]) for i in range(0, len(tokens), 10))

freq = extract_frequencies(corpus)
print(f"{len(freq)} distinct words, {freq.total_words} total")

# Desk-scale model; the EMA horizon is shortened to suit the shorter run.
config = ModelConfig(steps=2500, weight_ema_decay=0.995, log_every=500)
checkpoint = train(freq, config, rng=7)

# Every triplet observed in training decodes to its most likely subword;
# collisions are pruned and byte fallbacks guarantee total coverage.
vocab = build_vocabulary(checkpoint)
dawg = build_dawg(vocab)
print(f"\nvocabulary: {len(vocab)} entries, automaton has {dawg.state_count} states")

# Tokenize text mixing seen words with unseen stem+suffix combinations.
params = ScoreParams(alpha_split=0.1)
for result in tokenize_text("resting waterlock paintings", vocab, dawg, params):
    rendered = " + ".join(
        f"{piece.word.content.decode(errors='replace')}{piece.triplet}" for piece in result.pieces
    )
    print(f"  {rendered}   (total score {result.total_score:.2f})")

# Round trip: triplets alone suffice to reconstruct the text.
stream = [t for r in tokenize_text("walked the lights", vocab, dawg, params) for t in r.triplets]
print("\ndetokenized:", detokenize(stream, vocab).decode(errors="replace"))
