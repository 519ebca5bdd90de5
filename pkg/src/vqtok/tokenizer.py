"""Optimal and stochastic subword tokenization by shortest-path search.

A word (markers included) spans positions 0..n in symbol space; every
vocabulary subword that prefixes the suffix at position i is an edge
i -> i+len with weight score(subword). Dijkstra over this lattice yields the
minimum-total-score segmentation; all scores are non-negative by
construction, which the scorer asserts. Equal-cost paths are resolved by
fewer pieces, then the longest leading piece (and so on along the path).

In sampling mode each edge evaluation adds |w| * exp(eps) with
eps ~ N(0, sigma^2), keeping scores non-negative; because the byte lengths
of any full segmentation sum to the word length, a vanishing sigma
reproduces the deterministic optimum.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import corpus as corpus_mod
from .corpus import BoundedWord
from .errors import CoverageError, UnknownTripletError
from .vocab import SubwordDawg, Vocabulary, VocabularyEntry

DETERMINISTIC = "deterministic"
SAMPLING = "sampling"


@dataclass(frozen=True)
class ScoreParams:
    alpha_split: float = 0.1
    sigma_sample: float = 0.02
    mode: str = DETERMINISTIC

    def __post_init__(self) -> None:
        if self.alpha_split < 0:
            raise ValueError("alpha_split must be >= 0")
        if self.sigma_sample < 0:
            raise ValueError("sigma_sample must be >= 0")
        if self.mode not in (DETERMINISTIC, SAMPLING):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class TokenPiece:
    word: BoundedWord
    triplet: tuple[int, int, int]
    score: float


@dataclass
class Tokenization:
    pieces: list[TokenPiece]
    total_score: float

    @property
    def triplets(self) -> list[tuple[int, int, int]]:
        return [piece.triplet for piece in self.pieces]

    @property
    def subwords(self) -> list[BoundedWord]:
        return [piece.word for piece in self.pieces]

    def __len__(self) -> int:
        return len(self.pieces)


def score(entry: VocabularyEntry, params: ScoreParams, rng: np.random.Generator | None = None) -> float:
    """Edge weight of a vocabulary subword; always >= 0."""
    value = -entry.logprob + params.alpha_split
    if params.mode == SAMPLING:
        if rng is None:
            raise ValueError("sampling mode requires an rng")
        value += entry.word.byte_len * float(np.exp(rng.normal(0.0, params.sigma_sample)))
    if value < 0:
        raise AssertionError(f"negative score {value} for {entry}")
    return value


def tokenize_word(
    word: BoundedWord,
    vocab: Vocabulary,
    dawg: SubwordDawg,
    params: ScoreParams | None = None,
    rng: np.random.Generator | None = None,
) -> Tokenization:
    """Minimum-total-score segmentation of one word via Dijkstra.

    The priority queue is a binary heap keyed by the path comparison key and
    the suffix start position; stale heap entries are skipped by comparing
    against the settled key. The path is rebuilt from the predecessor map.
    """
    params = params or ScoreParams()
    symbols = word.symbols()
    n = len(symbols)
    # key: (cost, pieces, negated piece lengths) -- lexicographic "better"
    best: dict[int, tuple[float, int, tuple[int, ...]]] = {0: (0.0, 0, ())}
    pred: dict[int, tuple[int, VocabularyEntry, float]] = {}
    settled: set[int] = set()
    stuck: list[int] = []
    heap: list[tuple[float, int, tuple[int, ...], int]] = [(0.0, 0, (), 0)]
    while heap:
        cost, pieces, lenkey, pos = heapq.heappop(heap)
        if pos in settled or (cost, pieces, lenkey) != best.get(pos):
            continue
        settled.add(pos)
        if pos == n:
            break
        matches = dawg.iter_prefix_entries(symbols[pos:])
        if not matches:
            stuck.append(pos)
            continue
        for entry in matches:
            weight = score(entry, params, rng)
            span = len(entry.word.symbols())
            candidate = (cost + weight, pieces + 1, lenkey + (-span,))
            nxt = pos + span
            if nxt not in best or candidate < best[nxt]:
                best[nxt] = candidate
                pred[nxt] = (pos, entry, weight)
                heapq.heappush(heap, candidate + (nxt,))
    if n not in settled:
        raise CoverageError(min(stuck) if stuck else 0)

    chain: list[TokenPiece] = []
    pos = n
    while pos != 0:
        prev, entry, weight = pred[pos]
        chain.append(TokenPiece(entry.word, entry.triplet, weight))
        pos = prev
    chain.reverse()
    result = Tokenization(chain, best[n][0])
    joined: tuple[int, ...] = ()
    for piece in result.pieces:
        joined += piece.word.symbols()
    assert joined == symbols, "segmentation does not reproduce the input"
    return result


def tokenize_text(
    text,
    vocab: Vocabulary,
    dawg: SubwordDawg,
    params: ScoreParams | None = None,
    rng: np.random.Generator | None = None,
) -> list[Tokenization]:
    """Pretokenize into words, attach boundary markers, tokenize each."""
    data = text.encode("utf-8", errors="surrogateescape") if isinstance(text, str) else bytes(text)
    return [
        tokenize_word(BoundedWord.full(raw), vocab, dawg, params, rng)
        for raw in corpus_mod.split_words(data)
    ]


def sample_tokenizations(
    word: BoundedWord,
    vocab: Vocabulary,
    dawg: SubwordDawg,
    params: ScoreParams,
    rng: np.random.Generator,
    n: int,
) -> list[Tokenization]:
    """n independent stochastic segmentations with fresh noise per run."""
    if params.mode != SAMPLING:
        raise ValueError("sample_tokenizations requires sampling mode")
    if n < 1:
        raise ValueError("n must be >= 1")
    return [tokenize_word(word, vocab, dawg, params, rng) for _ in range(n)]


def detokenize(triplets: Iterable[Sequence[int]], vocab: Vocabulary) -> bytes:
    """Inverse lookup: triplet stream -> bytes, markers resolved to single
    spaces between words."""
    words: list[bytes] = []
    current = bytearray()
    open_word = False
    for position, raw in enumerate(triplets):
        triplet = tuple(int(c) for c in raw)
        entry = vocab.lookup_triplet(triplet)
        if entry is None:
            raise UnknownTripletError(triplet, position)
        if entry.word.has_bow and open_word:
            words.append(bytes(current))
            current = bytearray()
        current += entry.word.content
        open_word = True
        if entry.word.has_eow:
            words.append(bytes(current))
            current = bytearray()
            open_word = False
    if open_word:
        words.append(bytes(current))
    return b" ".join(words)
