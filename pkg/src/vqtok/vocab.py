"""Static vocabulary construction and its DAWG-backed tokenization index.

The vocabulary is decoded from a trained checkpoint: every triplet observed
during training is beam-decoded to a subword, each distinct subword is then
re-assigned to its best-scoring used triplet, collisions are pruned in favor
of the higher log-probability, and single-byte fallback entries (in all four
marker configurations) guarantee that any byte sequence stays tokenizable.

The index is a minimized acyclic automaton over the 258-symbol alphabet.
Entry payloads are not stored on states: the automaton doubles as a perfect
hash, mapping each accepted subword to its lexicographic rank among all
subwords, which indexes the entry table (Lucchesi-Kowaltowski style).
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corpus import BoundedWord
from .errors import FormatError, VocabularyError
from .serialize import read_varint, render_symbols, write_varint

logger = logging.getLogger(__name__)

_VOCAB_MAGIC = b"VQVC"
_VOCAB_VERSION = 1

_MARKER_CONFIGS = ((True, True), (True, False), (False, True), (False, False))


@dataclass(frozen=True)
class VocabularyEntry:
    word: BoundedWord
    triplet: tuple[int, int, int]
    logprob: float

    def __post_init__(self) -> None:
        if self.logprob > 0:
            raise ValueError(f"logprob must be <= 0, got {self.logprob}")
        if len(self.triplet) != 3 or any(c < 0 for c in self.triplet):
            raise ValueError(f"bad triplet {self.triplet}")


class Vocabulary:
    """Injective subword <-> triplet table, sorted by subword symbols."""

    def __init__(self, entries: Iterable[VocabularyEntry], codebook_size: int):
        ordered = sorted(entries, key=lambda e: e.word.symbols())
        by_subword: dict[tuple[int, ...], VocabularyEntry] = {}
        by_triplet: dict[tuple[int, int, int], VocabularyEntry] = {}
        for entry in ordered:
            if any(c >= codebook_size for c in entry.triplet):
                raise VocabularyError(f"triplet {entry.triplet} outside codebook range {codebook_size}")
            key = entry.word.symbols()
            if key in by_subword:
                raise VocabularyError(f"duplicate subword {render_symbols(key)!r}")
            if entry.triplet in by_triplet:
                raise VocabularyError(f"duplicate triplet {entry.triplet}")
            by_subword[key] = entry
            by_triplet[entry.triplet] = entry
        self.entries: tuple[VocabularyEntry, ...] = tuple(ordered)
        self.by_subword = by_subword
        self.by_triplet = by_triplet
        self.codebook_size = codebook_size

    def __len__(self) -> int:
        return len(self.entries)

    def lookup_subword(self, word: BoundedWord) -> VocabularyEntry | None:
        return self.by_subword.get(word.symbols())

    def lookup_triplet(self, triplet: tuple[int, int, int]) -> VocabularyEntry | None:
        return self.by_triplet.get(tuple(triplet))

    def covers_all_bytes(self) -> bool:
        """True when every byte exists in every marker configuration."""
        for bow, eow in _MARKER_CONFIGS:
            for value in range(256):
                if BoundedWord(bytes([value]), bow, eow).symbols() not in self.by_subword:
                    return False
        return True


# -----------------------------
# automaton
# -----------------------------

class _BuilderNode:
    __slots__ = ("edges", "final", "registered_id")

    def __init__(self) -> None:
        self.edges: dict[int, "_BuilderNode"] = {}
        self.final = False
        self.registered_id = -1


class SubwordDawg:
    """Minimized deterministic acyclic automaton over subword symbols.

    States are stored as sorted transition lists. `right_counts[s]` is the
    number of accepted words reachable from state s; walking a word while
    summing the counts of skipped smaller siblings (plus one for each final
    state passed through) yields the word's lexicographic rank, which indexes
    the entry table.
    """

    def __init__(
        self,
        finals: list[bool],
        transitions: list[list[tuple[int, int]]],
        root: int,
        entries: tuple[VocabularyEntry, ...] = (),
    ):
        self.finals = finals
        self.transitions = transitions
        self.root = root
        self.entries = entries
        self.right_counts = self._compute_right_counts()
        if entries and self.word_count != len(entries):
            raise VocabularyError(
                f"automaton accepts {self.word_count} words but {len(entries)} entries supplied"
            )

    @classmethod
    def from_words(cls, sorted_words: Sequence[tuple[int, ...]], entries: tuple[VocabularyEntry, ...] = ()):
        """Incremental construction from lexicographically sorted words."""
        root = _BuilderNode()
        register: dict[tuple, _BuilderNode] = {}
        unchecked: list[tuple[_BuilderNode, int, _BuilderNode]] = []
        registered: list[_BuilderNode] = []

        def node_key(node: _BuilderNode) -> tuple:
            return (node.final, tuple(sorted((sym, child.registered_id) for sym, child in node.edges.items())))

        def minimize(down_to: int) -> None:
            while len(unchecked) > down_to:
                parent, sym, child = unchecked.pop()
                key = node_key(child)
                existing = register.get(key)
                if existing is not None:
                    parent.edges[sym] = existing
                else:
                    child.registered_id = len(registered)
                    registered.append(child)
                    register[key] = child

        previous: tuple[int, ...] | None = None
        for word in sorted_words:
            if not word:
                raise VocabularyError("empty subword cannot be indexed")
            if previous is not None and word <= previous:
                raise VocabularyError("words must be strictly increasing for automaton construction")
            common = 0
            if previous is not None:
                limit = min(len(word), len(previous))
                while common < limit and word[common] == previous[common]:
                    common += 1
            minimize(common)
            node = root if not unchecked else unchecked[-1][2]
            for sym in word[common:]:
                child = _BuilderNode()
                node.edges[sym] = child
                unchecked.append((node, sym, child))
                node = child
            node.final = True
            previous = word
        minimize(0)

        # freeze: number states depth-first with sorted edges for a canonical layout
        order: dict[int, int] = {}
        nodes: list[_BuilderNode] = []

        def visit(node: _BuilderNode) -> int:
            key = id(node)
            if key in order:
                return order[key]
            index = len(nodes)
            order[key] = index
            nodes.append(node)
            for _, child in sorted(node.edges.items()):
                visit(child)
            return index

        visit(root)  # recursion depth is bounded by the longest word
        finals = [n.final for n in nodes]
        transitions = [
            [(sym, order[id(child)]) for sym, child in sorted(n.edges.items())] for n in nodes
        ]
        return cls(finals, transitions, 0, entries)

    def _compute_right_counts(self) -> list[int]:
        counts = [-1] * len(self.finals)
        for start in range(len(self.finals)):
            if counts[start] >= 0:
                continue
            stack = [start]
            while stack:
                state = stack[-1]
                if counts[state] >= 0:
                    stack.pop()
                    continue
                pending = [t for _, t in self.transitions[state] if counts[t] < 0]
                if pending:
                    stack.extend(pending)
                else:
                    counts[state] = (1 if self.finals[state] else 0) + sum(
                        counts[t] for _, t in self.transitions[state]
                    )
                    stack.pop()
        return counts

    @property
    def state_count(self) -> int:
        return len(self.finals)

    @property
    def word_count(self) -> int:
        return self.right_counts[self.root] if self.finals else 0

    def accepts(self, symbols: Sequence[int]) -> bool:
        state = self.root
        for sym in symbols:
            nxt = self._step(state, sym)
            if nxt is None:
                return False
            state = nxt
        return self.finals[state]

    def _step(self, state: int, sym: int) -> int | None:
        for edge_sym, target in self.transitions[state]:
            if edge_sym == sym:
                return target
            if edge_sym > sym:
                return None
        return None

    def rank(self, symbols: Sequence[int]) -> int | None:
        """Lexicographic rank of an accepted word, None if not accepted."""
        state = self.root
        index = 0
        for sym in symbols:
            if self.finals[state]:
                index += 1
            nxt = None
            for edge_sym, target in self.transitions[state]:
                if edge_sym < sym:
                    index += self.right_counts[target]
                elif edge_sym == sym:
                    nxt = target
                    break
                else:
                    break
            if nxt is None:
                return None
            state = nxt
        return index if self.finals[state] else None

    def iter_prefix_ranks(self, suffix: Sequence[int]) -> list[tuple[int, int]]:
        """(prefix_length, rank) for every accepted prefix of the suffix, in
        increasing length order."""
        out: list[tuple[int, int]] = []
        state = self.root
        index = 0
        for depth, sym in enumerate(suffix):
            if self.finals[state]:
                index += 1
            nxt = None
            for edge_sym, target in self.transitions[state]:
                if edge_sym < sym:
                    index += self.right_counts[target]
                elif edge_sym == sym:
                    nxt = target
                    break
                else:
                    break
            if nxt is None:
                return out
            state = nxt
            if self.finals[state]:
                out.append((depth + 1, index))
        return out

    def iter_prefix_entries(self, suffix: Sequence[int]) -> list[VocabularyEntry]:
        return [self.entries[rank] for _, rank in self.iter_prefix_ranks(suffix)]

    def languages_equal(self, other: "SubwordDawg") -> bool:
        return self._language_signature() == other._language_signature()

    def _language_signature(self):
        out = []
        stack: list[tuple[int, tuple[int, ...]]] = [(self.root, ())]
        while stack:
            state, prefix = stack.pop()
            if self.finals[state]:
                out.append(prefix)
            for sym, target in self.transitions[state]:
                stack.append((target, prefix + (sym,)))
        return sorted(out)

    # ---- serialization ----

    def to_bytes(self) -> bytearray:
        out = bytearray()
        out += struct.pack("<II", len(self.finals), self.root)
        for state in range(len(self.finals)):
            out.append(1 if self.finals[state] else 0)
            write_varint(out, len(self.transitions[state]))
            prev = -1
            for sym, target in self.transitions[state]:
                write_varint(out, sym - prev)  # delta-encoded, always >= 1
                write_varint(out, target)
                prev = sym
        return out

    @classmethod
    def from_bytes(cls, data: bytes, pos: int, entries: tuple[VocabularyEntry, ...] = ()):
        (count, root) = struct.unpack_from("<II", data, pos)
        pos += 8
        finals: list[bool] = []
        transitions: list[list[tuple[int, int]]] = []
        for _ in range(count):
            finals.append(bool(data[pos]))
            pos += 1
            nedges, pos = read_varint(data, pos)
            edges = []
            prev = -1
            for _ in range(nedges):
                delta, pos = read_varint(data, pos)
                target, pos = read_varint(data, pos)
                prev += delta
                edges.append((prev, target))
            transitions.append(edges)
        return cls(finals, transitions, root, entries), pos


def build_dawg(vocabulary: Vocabulary) -> SubwordDawg:
    if not len(vocabulary):
        raise VocabularyError("cannot index an empty vocabulary")
    words = [entry.word.symbols() for entry in vocabulary.entries]
    return SubwordDawg.from_words(words, vocabulary.entries)


def iter_prefixes(dawg: SubwordDawg, suffix: Sequence[int]) -> list[tuple[BoundedWord, VocabularyEntry]]:
    """Vocabulary subwords that are prefixes of the suffix, shortest first."""
    return [(entry.word, entry) for entry in dawg.iter_prefix_entries(suffix)]


# -----------------------------
# vocabulary construction
# -----------------------------

def build_vocabulary(checkpoint, beam_width: int | None = None) -> Vocabulary:
    """Decode the static vocabulary from a trained checkpoint.

    For every triplet used during training, beam-decode its subword; assign
    each distinct subword the used triplet maximizing its log-probability;
    prune triplet collisions keeping the higher-scoring subword; then inject
    single-byte fallback entries on reserved unused triplets so that any
    byte sequence remains coverable.
    """
    used = checkpoint.used_triplets()
    if not used:
        raise VocabularyError("checkpoint has no used triplets; train before building a vocabulary")
    k = checkpoint.config.codebook_size

    decoded: dict[tuple[int, ...], BoundedWord] = {}
    home: dict[tuple[int, ...], list[int]] = {}  # triplets that decoded to the word
    forced_count = 0
    for index, triplet in enumerate(used):
        result = checkpoint.greedy_decode(checkpoint.triplet_vectors(triplet), beam_width)
        if result.forced:
            forced_count += 1
            logger.debug("triplet %s decode hit the length limit; keeping the forced candidate", triplet)
        decoded.setdefault(result.word.symbols(), result.word)
        home.setdefault(result.word.symbols(), []).append(index)
    if forced_count:
        logger.warning(
            "%d of %d used triplets hit the decode length limit; forced candidates kept",
            forced_count, len(used),
        )

    used_vectors = np.stack([checkpoint.triplet_vectors(t) for t in used])  # (T, 3, D)
    chosen: dict[tuple[int, int, int], tuple[float, BoundedWord]] = {}
    for key in sorted(decoded):
        word = decoded[key]
        home_scores = checkpoint.decode_logprob_many(used_vectors[home[key]], word)
        incumbent = home[key][int(np.argmax(home_scores))]
        best, best_score = checkpoint.decode_logprob_argmax(used_vectors, word, incumbent)
        triplet = used[best]
        logprob = min(best_score, 0.0)
        if triplet in chosen and chosen[triplet][0] >= logprob:
            logger.info(
                "pruning %r (logprob %.4f): triplet %s already claimed by %r (logprob %.4f)",
                render_symbols(key), logprob, triplet,
                render_symbols(chosen[triplet][1].symbols()), chosen[triplet][0],
            )
            continue
        if triplet in chosen:
            logger.info(
                "pruning %r (logprob %.4f): triplet %s re-claimed by %r (logprob %.4f)",
                render_symbols(chosen[triplet][1].symbols()), chosen[triplet][0],
                triplet, render_symbols(key), logprob,
            )
        chosen[triplet] = (logprob, word)

    entries = [VocabularyEntry(word, triplet, logprob) for triplet, (logprob, word) in chosen.items()]
    entries.extend(_fallback_entries(entries, k))
    return Vocabulary(entries, k)


def _fallback_entries(entries: list[VocabularyEntry], codebook_size: int) -> list[VocabularyEntry]:
    present = {entry.word.symbols() for entry in entries}
    taken = {entry.triplet for entry in entries}
    floor = (min(entry.logprob for entry in entries) - 1.0) if entries else -1.0

    missing: list[BoundedWord] = []
    for bow, eow in _MARKER_CONFIGS:
        for value in range(256):
            word = BoundedWord(bytes([value]), bow, eow)
            if word.symbols() not in present:
                missing.append(word)

    free = (
        (r, g, b)
        for r in range(codebook_size)
        for g in range(codebook_size)
        for b in range(codebook_size)
        if (r, g, b) not in taken
    )
    out = []
    for word in missing:
        triplet = next(free, None)
        if triplet is None:
            raise VocabularyError(
                f"cannot reserve fallback triplets: codebook size {codebook_size} leaves no unused triplet space"
            )
        out.append(VocabularyEntry(word, triplet, floor))
    return out


# -----------------------------
# on-disk format
# -----------------------------

def vocabulary_to_bytes(vocab: Vocabulary, dawg: SubwordDawg | None = None) -> bytes:
    if dawg is None:
        dawg = build_dawg(vocab)
    wide = vocab.codebook_size > 256
    out = bytearray()
    out += _VOCAB_MAGIC
    out += struct.pack("<III", _VOCAB_VERSION, vocab.codebook_size, len(vocab.entries))
    for entry in vocab.entries:
        flags = (1 if entry.word.has_bow else 0) | (2 if entry.word.has_eow else 0)
        out.append(flags)
        write_varint(out, len(entry.word.content))
        out += entry.word.content
        out += struct.pack("<3H" if wide else "<3B", *entry.triplet)
        out += struct.pack("<d", entry.logprob)
    out += dawg.to_bytes()
    return bytes(out)


def vocabulary_from_bytes(data: bytes) -> tuple[Vocabulary, SubwordDawg]:
    if data[:4] != _VOCAB_MAGIC:
        raise FormatError("not a vocabulary file", expected=_VOCAB_MAGIC, found=data[:4])
    version, codebook_size, count = struct.unpack_from("<III", data, 4)
    if version != _VOCAB_VERSION:
        raise FormatError("unsupported vocabulary version", expected=_VOCAB_VERSION, found=version)
    pos = 4 + 12
    wide = codebook_size > 256
    fmt, width = ("<3H", 6) if wide else ("<3B", 3)
    entries = []
    for _ in range(count):
        flags = data[pos]
        pos += 1
        clen, pos = read_varint(data, pos)
        content = data[pos : pos + clen]
        pos += clen
        triplet = struct.unpack_from(fmt, data, pos)
        pos += width
        (logprob,) = struct.unpack_from("<d", data, pos)
        pos += 8
        entries.append(VocabularyEntry(BoundedWord(content, bool(flags & 1), bool(flags & 2)), triplet, logprob))
    vocab = Vocabulary(entries, codebook_size)
    dawg, pos = SubwordDawg.from_bytes(data, pos, vocab.entries)
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes after the automaton")
    return vocab, dawg


def write_vocabulary(path, vocab: Vocabulary, dawg: SubwordDawg | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(vocabulary_to_bytes(vocab, dawg))


def read_vocabulary(path) -> tuple[Vocabulary, SubwordDawg]:
    with open(path, "rb") as fh:
        return vocabulary_from_bytes(fh.read())


def export_tsv(vocab: Vocabulary) -> str:
    """Human-readable export: `subword<TAB>r,g,b<TAB>logprob` per entry."""
    lines = []
    for entry in vocab.entries:
        triplet = ",".join(str(c) for c in entry.triplet)
        lines.append(f"{render_symbols(entry.word.symbols())}\t{triplet}\t{entry.logprob!r}")
    return "\n".join(lines) + ("\n" if lines else "")
