"""Word-frequency extraction and the sampling distributions used in training.

Words are maximal runs of non-whitespace UTF-8 bytes; Unicode whitespace acts
as a separator and invalid byte sequences are kept verbatim. Counts feed
three weightings:

  sample_weight(f)         = f / ln(f + 1)          (flattened draw distribution)
  loss_weight(f)           = ln(f + 1)              (restores the true distribution in the loss)
  not_split_probability(f) = ln(f + 1) / ln(fmax+1) (frequent words are split less)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Iterator, Union

import numpy as np

from .serialize import BOW, EOW, escape_tsv_bytes, unescape_tsv_bytes

_ASCII_WS = frozenset(b" \t\n\r\x0b\x0c")


@dataclass(frozen=True)
class BoundedWord:
    """A byte sequence with optional beginning/end-of-word markers.

    A full word carries both markers, the left half of a split keeps only
    the beginning marker, the right half only the end marker, and an
    interior subword carries neither.
    """

    content: bytes
    has_bow: bool = False
    has_eow: bool = False

    def __post_init__(self) -> None:
        if not self.content and not (self.has_bow or self.has_eow):
            raise ValueError("a subword needs at least one byte or marker")

    @classmethod
    def full(cls, content: bytes) -> "BoundedWord":
        return cls(content, has_bow=True, has_eow=True)

    @classmethod
    def from_symbols(cls, symbols: Iterable[int]) -> "BoundedWord":
        syms = tuple(symbols)
        if not syms:
            raise ValueError("empty symbol sequence")
        has_bow = syms[0] == BOW
        has_eow = len(syms) > (1 if has_bow else 0) and syms[-1] == EOW
        body = syms[(1 if has_bow else 0) : (len(syms) - 1 if has_eow else len(syms))]
        if any(not 0 <= s < 256 for s in body):
            raise ValueError("markers are only allowed at the edges")
        return cls(bytes(body), has_bow, has_eow)

    def symbols(self) -> tuple[int, ...]:
        syms: tuple[int, ...] = tuple(self.content)
        if self.has_bow:
            syms = (BOW,) + syms
        if self.has_eow:
            syms = syms + (EOW,)
        return syms

    @property
    def byte_len(self) -> int:
        return len(self.content)

    @property
    def num_symbols(self) -> int:
        return len(self.content) + int(self.has_bow) + int(self.has_eow)


class WordFrequencyList:
    """Immutable map from word bytes to corpus count, with sampling tables."""

    def __init__(self, counts: dict[bytes, Union[int, float]]):
        for word, count in counts.items():
            if count < 1:
                raise ValueError(f"count for {word!r} must be >= 1, got {count}")
            if any(b in _ASCII_WS for b in word):
                raise ValueError(f"word {word!r} contains whitespace bytes")
            if not word:
                raise ValueError("empty word")
        self._counts = dict(counts)
        self._total = sum(self._counts.values())
        self._sample_table: tuple[list[bytes], np.ndarray] | None = None
        self._max_count = max(self._counts.values()) if self._counts else 0

    def __len__(self) -> int:
        return len(self._counts)

    def __contains__(self, word: bytes) -> bool:
        return word in self._counts

    def __getitem__(self, word: bytes):
        return self._counts[word]

    def items(self):
        return self._counts.items()

    def words(self) -> list[bytes]:
        return list(self._counts)

    @property
    def total_words(self):
        return self._total

    @property
    def max_count(self):
        return self._max_count

    def _sampling_table(self) -> tuple[list[bytes], np.ndarray]:
        # built lazily once; the list is immutable so this is safe to cache
        if self._sample_table is None:
            words = sorted(self._counts)  # deterministic draw order
            weights = np.array([sample_weight(self._counts[w]) for w in words])
            self._sample_table = (words, np.cumsum(weights))
        return self._sample_table


def split_words(data: bytes) -> list[bytes]:
    """Split raw bytes into words: maximal runs of non-whitespace.

    Unicode whitespace separates words; bytes that do not decode as UTF-8
    are kept verbatim inside the surrounding word.
    """
    text = data.decode("utf-8", errors="surrogateescape")
    return [w.encode("utf-8", errors="surrogateescape") for w in text.split()]


def _iter_chunks(stream) -> Iterator[bytes]:
    if isinstance(stream, bytes):
        yield stream
        return
    if isinstance(stream, str):
        yield stream.encode("utf-8")
        return
    if hasattr(stream, "read"):
        while True:
            chunk = stream.read(1 << 20)
            if not chunk:
                return
            yield chunk.encode("utf-8") if isinstance(chunk, str) else chunk
        return
    for chunk in stream:
        yield chunk.encode("utf-8") if isinstance(chunk, str) else chunk


def extract_frequencies(stream) -> WordFrequencyList:
    """Count words in a text stream (str, bytes, chunk iterable, or file).

    Chunk boundaries are healed by cutting only at ASCII whitespace, which
    never occurs inside a multi-byte UTF-8 sequence.
    """
    counts: dict[bytes, int] = {}
    buffer = b""
    for chunk in _iter_chunks(stream):
        buffer += chunk
        cut = -1
        for i in range(len(buffer) - 1, -1, -1):
            if buffer[i] in _ASCII_WS:
                cut = i
                break
        if cut < 0:
            continue
        for word in split_words(buffer[: cut + 1]):
            counts[word] = counts.get(word, 0) + 1
        buffer = buffer[cut + 1 :]
    for word in split_words(buffer):
        counts[word] = counts.get(word, 0) + 1
    return WordFrequencyList(counts)


def merge_frequency_lists(lists: Iterable[WordFrequencyList]) -> WordFrequencyList:
    """Merge shard counts; the result is independent of shard order."""
    counts: dict[bytes, float] = {}
    for flist in lists:
        for word, count in flist.items():
            counts[word] = counts.get(word, 0) + count
    return WordFrequencyList(counts)


def sample_weight(count) -> float:
    """Unnormalized draw weight f / ln(f + 1)."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    return count / math.log(count + 1)


def loss_weight(count) -> float:
    """Loss weight ln(f + 1); multiplies back with sample_weight to f."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    return math.log(count + 1)


def not_split_probability(count, max_count) -> float:
    """Probability of keeping a drawn word whole: ln(f+1) / ln(fmax+1)."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if count > max_count:
        raise ValueError(f"count {count} exceeds the maximum {max_count}")
    return math.log(count + 1) / math.log(max_count + 1)


def draw_training_example(
    flist: WordFrequencyList, rng: np.random.Generator
) -> Union[BoundedWord, tuple[BoundedWord, BoundedWord]]:
    """Draw one word by sample_weight, randomly split into a subword pair.

    The word is kept whole with not_split_probability; otherwise it is cut
    at a uniformly random interior byte boundary. The left half keeps the
    beginning marker, the right half the end marker. Single-byte words are
    never split.
    """
    if len(flist) == 0:
        raise ValueError("cannot draw from an empty frequency list")
    words, cumulative = flist._sampling_table()
    u = rng.random() * cumulative[-1]
    word = words[int(np.searchsorted(cumulative, u, side="right"))]
    keep = not_split_probability(flist[word], flist.max_count)
    if len(word) < 2 or rng.random() < keep:
        return BoundedWord.full(word)
    cut = int(rng.integers(1, len(word)))
    return (
        BoundedWord(word[:cut], has_bow=True, has_eow=False),
        BoundedWord(word[cut:], has_bow=False, has_eow=True),
    )


# -----------------------------
# frequency-list TSV format
# -----------------------------
# `word<TAB>count`, sorted by descending count (ties by word bytes), with
# backslash, tab and newline escaped inside words.

def write_frequency_tsv(flist: WordFrequencyList, out: BinaryIO) -> None:
    for word, count in sorted(flist.items(), key=lambda kv: (-kv[1], kv[0])):
        rendered = str(count) if isinstance(count, int) else repr(count)
        out.write(escape_tsv_bytes(word) + b"\t" + rendered.encode("ascii") + b"\n")


def read_frequency_tsv(data: bytes) -> WordFrequencyList:
    counts: dict[bytes, Union[int, float]] = {}
    for lineno, line in enumerate(data.split(b"\n"), start=1):
        if not line:
            continue
        try:
            word_field, count_field = line.rsplit(b"\t", 1)
        except ValueError:
            raise ValueError(f"line {lineno}: expected `word<TAB>count`") from None
        text = count_field.decode("ascii")
        count: Union[int, float] = float(text) if "." in text or "e" in text else int(text)
        counts[unescape_tsv_bytes(word_field)] = count
    return WordFrequencyList(counts)
