"""BPE trainer and encoder against hand-run and naive-merge oracles."""

import numpy as np
import pytest

from vqtok.bpe import MergeTable, encode_bpe, token_ids, train_bpe, word_symbols
from vqtok.corpus import WordFrequencyList
from vqtok.serialize import BOW, EOW


def naive_encode(word: bytes, table: MergeTable) -> list:
    """Independent oracle: repeatedly apply the lowest-index applicable rule
    to all its occurrences until no rule applies."""
    seq = [(b,) for b in word]
    seq = [(BOW,)] + seq + [(EOW,)]
    while True:
        applicable = None
        for index, (left, right) in enumerate(table.merges):
            if any(seq[i] == left and seq[i + 1] == right for i in range(len(seq) - 1)):
                applicable = index
                break
        if applicable is None:
            return seq
        left, right = table.merges[applicable]
        out = []
        i = 0
        while i < len(seq):
            if i + 1 < len(seq) and seq[i] == left and seq[i + 1] == right:
                out.append(left + right)
                i += 2
            else:
                out.append(seq[i])
                i += 1
        seq = out


class TestTrain:
    def test_banana_hand_example(self):
        flist = WordFrequencyList({b"banana": 1})
        table = train_bpe(flist, 257)
        # pairs: (BOW,b):1 (b,a):1 (a,n):2 (n,a):2 (a,EOW):1 -> tie an/na -> an
        assert table.merges == [((97,), (110,))]

    def test_vocab_size_budget(self):
        flist = WordFrequencyList({b"banana": 1})
        assert len(train_bpe(flist, 257)) == 1
        assert len(train_bpe(flist, 260)) == 4

    def test_exhausts_corpus_early(self):
        flist = WordFrequencyList({b"ab": 1})
        table = train_bpe(flist, 1000)
        # [BOW a b EOW] fully merges in 3 steps
        assert len(table) == 3

    def test_deterministic(self):
        flist = WordFrequencyList({b"banana": 3, b"bandana": 2, b"ananas": 1})
        first = train_bpe(flist, 280)
        second = train_bpe(flist, 280)
        assert first.merges == second.merges

    def test_frequency_weighting(self):
        # "xy" appears in a single word with count 10, "ab" in one with count 1
        flist = WordFrequencyList({b"xy": 10, b"ab": 1})
        table = train_bpe(flist, 257)
        assert table.merges[0] == ((120,), (121,))

    def test_vocab_size_precondition(self):
        with pytest.raises(ValueError):
            train_bpe(WordFrequencyList({b"ab": 1}), 256)


class TestEncode:
    def test_banana_every_an_merged(self):
        flist = WordFrequencyList({b"banana": 1})
        table = train_bpe(flist, 257)
        pieces = encode_bpe(b"banana", table)
        assert pieces == [(BOW,), (98,), (97, 110), (97, 110), (97,), (EOW,)]

    def test_dropout_one_limit_yields_raw_bytes(self):
        flist = WordFrequencyList({b"banana": 2, b"bandana": 1})
        table = train_bpe(flist, 300)
        rng = np.random.default_rng(0)
        pieces = encode_bpe(b"banana", table, dropout_p=1 - 1e-15, rng=rng)
        assert pieces == word_symbols(b"banana")
        assert all(len(piece) == 1 for piece in pieces)

    def test_dropout_zero_matches_naive_oracle(self):
        rng = np.random.default_rng(17)
        words = [bytes(rng.integers(97, 103, size=rng.integers(1, 12)).astype("uint8")) for _ in range(300)]
        flist = WordFrequencyList({w: int(c) for w, c in zip(words, rng.integers(1, 50, size=len(words)))})
        table = train_bpe(flist, 290)
        probes = [bytes(rng.integers(97, 103, size=rng.integers(1, 14)).astype("uint8")) for _ in range(10_000)]
        for word in probes:
            assert encode_bpe(word, table) == naive_encode(word, table)

    def test_dropout_requires_rng(self):
        table = MergeTable([])
        with pytest.raises(ValueError):
            encode_bpe(b"ab", table, dropout_p=0.5)
        with pytest.raises(ValueError):
            encode_bpe(b"ab", table, dropout_p=1.0, rng=np.random.default_rng(0))

    def test_concatenation_reproduces_input(self):
        rng = np.random.default_rng(3)
        flist = WordFrequencyList({b"appleapple": 4, b"apples": 2, b"plea": 1})
        table = train_bpe(flist, 300)
        for _ in range(200):
            raw = bytes(rng.integers(97, 123, size=rng.integers(1, 16)).astype("uint8"))
            for dropout in (0.0, 0.3):
                pieces = encode_bpe(raw, table, dropout, np.random.default_rng(1) if dropout else None)
                joined = bytes(v for piece in pieces for v in piece if v < 256)
                assert joined == raw

    def test_token_count_nonincreasing_in_vocab_size(self):
        rng = np.random.default_rng(5)
        words = {bytes(rng.integers(97, 105, size=rng.integers(2, 10)).astype("uint8")): int(c)
                 for c in rng.integers(1, 40, size=120)}
        flist = WordFrequencyList(words)
        table = train_bpe(flist, 1000)
        corpus_words = sorted(flist.words())
        counts = []
        for size in (300, 500, 1000):
            sub = table.truncated(size)
            counts.append(sum(len(encode_bpe(w, sub)) for w in corpus_words))
        assert counts[0] >= counts[1] >= counts[2]

    def test_seeded_dropout_reproducible(self):
        flist = WordFrequencyList({b"banana": 2, b"bandana": 1})
        table = train_bpe(flist, 300)
        first = encode_bpe(b"bananarama", table, 0.4, np.random.default_rng(9))
        second = encode_bpe(b"bananarama", table, 0.4, np.random.default_rng(9))
        assert first == second


class TestMergeTableFile:
    def test_round_trip(self, tmp_path):
        flist = WordFrequencyList({b"banana": 2, b"bandana": 1, "naïve".encode(): 3})
        table = train_bpe(flist, 300)
        path = tmp_path / "merges.txt"
        table.save(path)
        again = MergeTable.load(path)
        assert again.merges == table.merges

    def test_text_format_one_merge_per_line(self):
        table = MergeTable([((97,), (110,)), ((97, 110), (97,))])
        assert table.to_text() == "a n\nan a\n"

    def test_marker_rendering(self):
        table = MergeTable([((BOW,), (98,))])
        assert table.to_text() == "\\< b\n"
        assert MergeTable.from_text(table.to_text()).merges == table.merges

    def test_unknown_operand_rejected(self):
        with pytest.raises(ValueError):
            MergeTable([((97, 98), (99,))])  # (97,98) never produced

    def test_duplicate_merge_rejected(self):
        with pytest.raises(ValueError):
            MergeTable([((97,), (98,)), ((97,), (98,))])

    def test_token_ids_stable(self):
        table = MergeTable([((97,), (110,))])
        ids = token_ids([(BOW,), (97, 110), (98,), (EOW,)], table)
        assert ids == [256, 258, 98, 257]
