"""Byte-level BPE baseline: trainer, encoder, and merge dropout.

Symbols are tuples of base ids (256 bytes plus the two boundary markers);
words get both markers attached before merging so splits-per-word statistics
line up with the triplet tokenizer. Training repeatedly merges the most
frequent adjacent pair, weighted by word frequency, breaking ties by the
lexicographically smallest pair. The encoder applies merges in table order,
one left-to-right pass each; a pair matching rule k can never re-form after
pass k (new adjacencies always involve the newest symbol), so this is
equivalent to the iterative lowest-rank formulation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .corpus import WordFrequencyList
from .serialize import BOW, EOW, parse_symbols, render_symbols

Symbol = tuple[int, ...]

_BASE_ALPHABET = 256  # merge budget counts bytes only; markers ride along


@dataclass
class MergeTable:
    """Ordered merge list; position is priority, base alphabet is 256 bytes."""

    merges: list[tuple[Symbol, Symbol]]

    def __post_init__(self) -> None:
        known: set[Symbol] = {(b,) for b in range(256)} | {(BOW,), (EOW,)}
        seen: set[tuple[Symbol, Symbol]] = set()
        for left, right in self.merges:
            if left not in known or right not in known:
                raise ValueError(f"merge ({left}, {right}) uses an unknown operand")
            if (left, right) in seen:
                raise ValueError(f"duplicate merge ({left}, {right})")
            seen.add((left, right))
            known.add(left + right)

    def __len__(self) -> int:
        return len(self.merges)

    def truncated(self, vocab_size: int) -> "MergeTable":
        """The table a smaller training budget would have produced."""
        if vocab_size <= _BASE_ALPHABET:
            raise ValueError("vocab_size must exceed the 256-byte base alphabet")
        return MergeTable(self.merges[: vocab_size - _BASE_ALPHABET])

    def to_text(self) -> str:
        lines = [f"{render_symbols(left)} {render_symbols(right)}" for left, right in self.merges]
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str) -> "MergeTable":
        merges = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line:
                continue
            try:
                left, right = line.split(" ")
            except ValueError:
                raise ValueError(f"line {lineno}: expected `left<SPACE>right`") from None
            merges.append((parse_symbols(left), parse_symbols(right)))
        return cls(merges)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", errors="surrogateescape") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "MergeTable":
        with open(path, "r", encoding="utf-8", errors="surrogateescape") as fh:
            return cls.from_text(fh.read())


def word_symbols(word: bytes, add_markers: bool = True) -> list[Symbol]:
    seq: list[Symbol] = [(b,) for b in word]
    if add_markers:
        seq = [(BOW,)] + seq + [(EOW,)]
    return seq


def train_bpe(flist: WordFrequencyList, vocab_size: int) -> MergeTable:
    """Learn up to vocab_size - 256 merges from a frequency list."""
    if vocab_size <= _BASE_ALPHABET:
        raise ValueError("vocab_size must exceed the 256-byte base alphabet")
    corpus = [(word_symbols(word), count) for word, count in sorted(flist.items())]
    merges: list[tuple[Symbol, Symbol]] = []
    for _ in range(vocab_size - _BASE_ALPHABET):
        counts: dict[tuple[Symbol, Symbol], float] = {}
        for seq, weight in corpus:
            for left, right in zip(seq, seq[1:]):
                pair = (left, right)
                counts[pair] = counts.get(pair, 0) + weight
        if not counts:
            break  # corpus exhausted: every word is a single symbol
        best_count = max(counts.values())
        pair = min(p for p, c in counts.items() if c == best_count)
        merges.append(pair)
        for seq, _ in corpus:
            _merge_pass(seq, pair)
    return MergeTable(merges)


def _merge_pass(seq: list[Symbol], pair: tuple[Symbol, Symbol], dropout_p: float = 0.0, rng=None) -> None:
    """One left-to-right pass merging occurrences of `pair` in place."""
    left, right = pair
    merged = left + right
    i = 0
    write = 0
    n = len(seq)
    while i < n:
        if i + 1 < n and seq[i] == left and seq[i + 1] == right and not (
            dropout_p > 0.0 and rng.random() < dropout_p
        ):
            seq[write] = merged
            i += 2
        else:
            seq[write] = seq[i]
            i += 1
        write += 1
    del seq[write:]


def encode_bpe(
    word: bytes,
    table: MergeTable,
    dropout_p: float = 0.0,
    rng: np.random.Generator | None = None,
    add_markers: bool = True,
) -> list[Symbol]:
    """Segment a word by applying merges in table order.

    With dropout every applicable merge occurrence is skipped independently
    with probability dropout_p, yielding a sampled coarseness; dropout 0 uses
    a fast lowest-rank search that produces the identical segmentation.
    """
    if not 0.0 <= dropout_p < 1.0:
        raise ValueError("dropout_p must lie in [0, 1)")
    if dropout_p > 0.0 and rng is None:
        raise ValueError("dropout requires an rng")
    seq = word_symbols(word, add_markers)
    if dropout_p == 0.0:
        ranks = {pair: i for i, pair in enumerate(table.merges)}
        while len(seq) > 1:
            ranked = [
                (ranks[pair], idx)
                for idx, pair in enumerate(zip(seq, seq[1:]))
                if pair in ranks
            ]
            if not ranked:
                break
            rank, _ = min(ranked)
            _merge_pass(seq, table.merges[rank])
        return seq
    for pair in table.merges:
        _merge_pass(seq, pair, dropout_p, rng)
    return seq


def token_ids(pieces: Iterable[Symbol], table: MergeTable) -> list[int]:
    """Stable integer ids: 0..255 bytes, 256/257 markers, then merge order."""
    ids: dict[Symbol, int] = {(b,): b for b in range(256)}
    ids[(BOW,)] = 256
    ids[(EOW,)] = 257
    for index, (left, right) in enumerate(table.merges):
        ids[left + right] = 258 + index
    return [ids[piece] for piece in pieces]
