"""Tokenizer-level measurements: splits-per-word curves, index-usage
histograms with entropies, a character-noise generator, and RGB rendering of
triplet streams."""

from __future__ import annotations

import html
import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .serialize import render_symbols

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NoiseConfig:
    p_noise: float
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_noise <= 1.0:
            raise ValueError("p_noise must lie in [0, 1]")


@dataclass
class PerturbStats:
    characters: int = 0
    events: int = 0
    deletions: int = 0
    case_changes: int = 0
    repetitions: int = 0

    @property
    def rate(self) -> float:
        return self.events / self.characters if self.characters else 0.0


def perturb(text: str, config: NoiseConfig, rng: np.random.Generator) -> str:
    """Noise every character independently with probability p_noise, choosing
    uniformly between deletion, a letter-case flip, and repeating the
    character 1-3 extra times.

    Operates on Unicode scalar values, so output is always valid Unicode; a
    case flip on a caseless character is an identity but still counts as a
    perturbation event.
    """
    return perturb_with_stats(text, config, rng)[0]


def perturb_with_stats(text: str, config: NoiseConfig, rng: np.random.Generator) -> tuple[str, PerturbStats]:
    stats = PerturbStats()
    out: list[str] = []
    for char in text:
        stats.characters += 1
        if config.p_noise == 0.0 or rng.random() >= config.p_noise:
            out.append(char)
            continue
        stats.events += 1
        kind = int(rng.integers(0, 3))
        if kind == 0:
            stats.deletions += 1
        elif kind == 1:
            stats.case_changes += 1
            out.append(char.swapcase())
        else:
            stats.repetitions += 1
            out.append(char * (1 + int(rng.integers(1, 4))))
    return "".join(out), stats


# -----------------------------
# splits per word
# -----------------------------

def splits_per_word(
    make_tokenizer: Callable[[object], Callable[[bytes], Sequence]],
    corpus_words: Sequence[bytes],
    param_grid: Sequence,
) -> dict:
    """Mean piece count per word for every parameter value on the grid.

    `make_tokenizer(param)` returns a callable mapping word bytes to its
    piece sequence; the grid varies the split penalty for the triplet
    tokenizer and the vocabulary size for BPE.
    """
    if not corpus_words:
        raise ValueError("corpus must be non-empty")
    table = {}
    for param in param_grid:
        tokenize = make_tokenizer(param)
        total = sum(len(tokenize(word)) for word in corpus_words)
        table[param] = total / len(corpus_words)
    return table


# -----------------------------
# index histograms
# -----------------------------

def entropy(counts: Sequence[float]) -> float:
    """Shannon entropy in nats of a count vector."""
    arr = np.asarray(counts, dtype=np.float64)
    total = arr.sum()
    if total <= 0:
        return 0.0
    p = arr[arr > 0] / total
    return float(-(p * np.log(p)).sum())


@dataclass
class ChannelHistogram:
    counts: np.ndarray  # (3, K)
    entropies: tuple[float, float, float]
    normalized_entropies: tuple[float, float, float]


def index_histogram(triplets: Iterable[Sequence[int]], codebook_size: int) -> ChannelHistogram:
    """Per-channel index counts plus (normalized) entropies of a piece stream."""
    counts = np.zeros((3, codebook_size), dtype=np.int64)
    for triplet in triplets:
        for channel in range(3):
            counts[channel, triplet[channel]] += 1
    entropies = tuple(entropy(counts[c]) for c in range(3))
    norm = math.log(codebook_size)
    return ChannelHistogram(counts, entropies, tuple(h / norm for h in entropies))


@dataclass
class TokenHistogram:
    counts: dict[int, int]
    entropy: float
    normalized_entropy: float


def bpe_token_histogram(token_id_stream: Iterable[int], support_size: int) -> TokenHistogram:
    """Token-id counts and entropy, normalized by the id-space size."""
    counts: dict[int, int] = {}
    for token in token_id_stream:
        counts[token] = counts.get(token, 0) + 1
    h = entropy(list(counts.values()))
    return TokenHistogram(counts, h, h / math.log(support_size) if support_size > 1 else 0.0)


# -----------------------------
# color rendering
# -----------------------------

@dataclass
class ColorReport:
    pieces: list[tuple[str, str]]  # (hex color, rendered subword)

    def to_text(self) -> str:
        lines = [f"{color}\t{subword}" for color, subword in self.pieces]
        return "\n".join(lines) + ("\n" if lines else "")

    def to_html(self) -> str:
        spans = []
        for color, subword in self.pieces:
            spans.append(
                f'<span style="background-color:{color}">{html.escape(subword)}</span>'
            )
        return "".join(spans)


def _scale_component(value: int, codebook_size: int) -> int:
    if codebook_size <= 256:
        return value
    return min(255, value * 256 // codebook_size)


def colorize(pieces: Iterable[tuple[Sequence[int], Sequence[int]]], codebook_size: int = 256) -> ColorReport:
    """Render (subword symbols, triplet) pairs as 24-bit hex colors.

    Triplets fit a color channel directly for codebooks up to 256 entries;
    larger codebooks are scaled down to 8 bits with a warning.
    """
    if codebook_size > 256:
        logger.warning("codebook size %d exceeds 8 bits per channel; scaling indices", codebook_size)
    rendered = []
    for symbols, triplet in pieces:
        r, g, b = (_scale_component(int(c), codebook_size) for c in triplet)
        rendered.append((f"#{r:02X}{g:02X}{b:02X}", render_symbols(symbols)))
    return ColorReport(rendered)
