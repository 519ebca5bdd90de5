"""Frequency extraction, sampling weights, and the draw distribution."""

import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vqtok import corpus
from vqtok.corpus import (
    BoundedWord,
    WordFrequencyList,
    draw_training_example,
    extract_frequencies,
    loss_weight,
    not_split_probability,
    sample_weight,
)
from vqtok.serialize import BOW, EOW

E = math.e


class TestExtractFrequencies:
    def test_direct_counting(self):
        flist = extract_frequencies("a a b")
        assert dict(flist.items()) == {b"a": 2, b"b": 1}
        assert flist.total_words == 3

    def test_empty_stream(self):
        flist = extract_frequencies("")
        assert len(flist) == 0
        assert flist.total_words == 0

    def test_invalid_utf8_kept_verbatim(self):
        flist = extract_frequencies(b"ok \xff\xfe ok")
        assert flist[b"\xff\xfe"] == 1
        assert flist[b"ok"] == 2

    def test_unicode_whitespace_separates(self):
        flist = extract_frequencies("one two three")
        assert sorted(flist.words()) == [b"one", b"three", b"two"]

    def test_large_fixture_matches_naive_oracle(self):
        # ~10 MB of deterministic text against a one-pass split-and-count oracle
        rng = np.random.default_rng(99)
        vocab = ["".join(chr(97 + c) for c in rng.integers(0, 26, size=rng.integers(2, 11))) for _ in range(3000)]
        picks = rng.integers(0, len(vocab), size=1_700_000)
        text = " ".join(vocab[i] for i in picks)
        assert len(text) > 10_000_000
        oracle: dict[bytes, int] = {}
        for token in text.split():  # independent one-pass hash count
            key = token.encode()
            oracle[key] = oracle.get(key, 0) + 1
        chunks = [text[i : i + 65536].encode() for i in range(0, len(text), 65536)]
        flist = extract_frequencies(chunks)
        assert dict(flist.items()) == oracle

    def test_chunk_boundary_inside_multibyte_char(self):
        data = "x y".encode("utf-8")  # NBSP is 2 bytes
        cut = data.index(b"\xc2") + 1
        flist = extract_frequencies([data[:cut], data[cut:]])
        assert sorted(flist.words()) == [b"x", b"y"]

    def test_merge_is_order_independent(self):
        a = extract_frequencies("x x y")
        b = extract_frequencies("y z")
        merged_ab = corpus.merge_frequency_lists([a, b])
        merged_ba = corpus.merge_frequency_lists([b, a])
        assert dict(merged_ab.items()) == dict(merged_ba.items()) == {b"x": 2, b"y": 2, b"z": 1}


class TestWeights:
    def test_sample_weight_values(self):
        assert sample_weight(1) == pytest.approx(1 / math.log(2), abs=1e-12)
        assert sample_weight(E - 1) == pytest.approx(E - 1, abs=1e-12)

    def test_sample_weight_increasing(self):
        values = [sample_weight(f) for f in range(1, 2000)]
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_loss_weight_values(self):
        assert loss_weight(E - 1) == pytest.approx(1.0, abs=1e-12)
        assert loss_weight(1) == pytest.approx(math.log(2), abs=1e-12)

    def test_weights_multiply_back(self):
        for f in [1, 2, 3, 7, 100, 12345, E - 1, 2.5]:
            product = sample_weight(f) * loss_weight(f)
            assert abs(product - f) / f < 1e-12

    @given(st.floats(min_value=1.0, max_value=1e9, allow_nan=False))
    def test_weights_multiply_back_property(self, f):
        assert abs(sample_weight(f) * loss_weight(f) - f) / f < 1e-12

    def test_not_split_bounds(self):
        assert not_split_probability(10, 10) == 1.0
        assert not_split_probability(1, E**2 - 1) == pytest.approx(math.log(2) / 2, abs=1e-9)
        values = [not_split_probability(f, 1000) for f in range(1, 1001)]
        assert all(b >= a for a, b in zip(values, values[1:]))
        assert all(0 < v <= 1 for v in values)

    def test_preconditions(self):
        with pytest.raises(ValueError):
            sample_weight(0)
        with pytest.raises(ValueError):
            loss_weight(0.5)
        with pytest.raises(ValueError):
            not_split_probability(11, 10)


class TestBoundedWord:
    def test_symbols_round_trip(self):
        word = BoundedWord(b"ab", True, True)
        assert word.symbols() == (BOW, 97, 98, EOW)
        assert BoundedWord.from_symbols(word.symbols()) == word

    def test_marker_configurations(self):
        assert BoundedWord.from_symbols((97,)) == BoundedWord(b"a", False, False)
        assert BoundedWord.from_symbols((BOW, 97)) == BoundedWord(b"a", True, False)
        assert BoundedWord.from_symbols((97, EOW)) == BoundedWord(b"a", False, True)

    def test_interior_marker_rejected(self):
        with pytest.raises(ValueError):
            BoundedWord.from_symbols((97, BOW, 98))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            BoundedWord(b"", False, False)


class TestDraw:
    def test_single_byte_word_never_split(self):
        flist = WordFrequencyList({b"a": 1})
        rng = np.random.default_rng(0)
        for _ in range(100):
            drawn = draw_training_example(flist, rng)
            assert drawn == BoundedWord(b"a", True, True)

    def test_max_frequency_word_never_split(self):
        flist = WordFrequencyList({b"abcdef": 50, b"xy": 3})
        rng = np.random.default_rng(1)
        for _ in range(2000):
            drawn = draw_training_example(flist, rng)
            if isinstance(drawn, BoundedWord) and drawn.content == b"abcdef":
                continue
            assert not (isinstance(drawn, tuple) and drawn[0].content + drawn[1].content == b"abcdef")

    def test_split_halves_rejoin_and_keep_markers(self):
        flist = WordFrequencyList({b"abcd": 1, b"zzzz": 1000})
        rng = np.random.default_rng(2)
        seen_split = False
        for _ in range(500):
            drawn = draw_training_example(flist, rng)
            if isinstance(drawn, tuple):
                left, right = drawn
                seen_split = True
                assert left.has_bow and not left.has_eow
                assert right.has_eow and not right.has_bow
                assert left.content and right.content
                assert left.content + right.content in (b"abcd", b"zzzz")
        assert seen_split

    def test_draw_ratio_matches_sample_weights(self):
        flist = WordFrequencyList({b"x": 1, b"y": E - 1})
        rng = np.random.default_rng(3)
        n = 1_000_000
        wx = sample_weight(1)
        wy = sample_weight(E - 1)
        p = wx / (wx + wy)
        hits = 0
        for _ in range(n):
            drawn = draw_training_example(flist, rng)
            word = drawn if isinstance(drawn, BoundedWord) else drawn[0]
            content = word.content if isinstance(drawn, BoundedWord) else drawn[0].content + drawn[1].content
            if content == b"x":
                hits += 1
        sigma = math.sqrt(n * p * (1 - p))
        assert abs(hits - n * p) <= 3 * sigma

    def test_fixed_seed_reproducible(self):
        flist = WordFrequencyList({b"abc": 3, b"de": 7, b"f": 1})
        runs = []
        for _ in range(2):
            rng = np.random.default_rng(42)
            runs.append([draw_training_example(flist, rng) for _ in range(200)])
        assert runs[0] == runs[1]

    def test_empty_list_rejected(self):
        with pytest.raises(ValueError):
            draw_training_example(WordFrequencyList({}), np.random.default_rng(0))


class TestTsv:
    def test_round_trip(self):
        flist = WordFrequencyList({b"beta": 2, b"alpha": 10, "晚".encode(): 1})
        buffer = io.BytesIO()
        corpus.write_frequency_tsv(flist, buffer)
        back = corpus.read_frequency_tsv(buffer.getvalue())
        assert dict(back.items()) == dict(flist.items())

    def test_sorted_by_descending_count(self):
        flist = WordFrequencyList({b"a": 1, b"b": 5, b"c": 3})
        buffer = io.BytesIO()
        corpus.write_frequency_tsv(flist, buffer)
        lines = buffer.getvalue().decode().strip().split("\n")
        assert [line.split("\t")[0] for line in lines] == ["b", "c", "a"]

    @given(st.binary(min_size=1, max_size=30).filter(lambda w: not any(b in b" \t\n\r\x0b\x0c" for b in w)))
    @settings(max_examples=200)
    def test_escape_round_trip_any_word(self, word):
        flist = WordFrequencyList({word: 1})
        buffer = io.BytesIO()
        corpus.write_frequency_tsv(flist, buffer)
        back = corpus.read_frequency_tsv(buffer.getvalue())
        assert dict(back.items()) == {word: 1}
