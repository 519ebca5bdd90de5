"""Acceptance suite: one test per criterion, each printing a PASS line.

Tolerances and budgets are pinned here exactly as stated; the end-to-end
training criteria (A5, A7) consume the session-scoped desk-scale run.
"""

import math
import time

import numpy as np

from conftest import coverage_vocab, make_vocab
from helpers import finite_difference_check, tiny_model
from test_bpe import naive_encode
from test_tokenizer import exhaustive_best_score, vocab_score_map
from vqtok import analysis, bpe, vq
from vqtok.corpus import (
    BoundedWord,
    WordFrequencyList,
    draw_training_example,
    loss_weight,
    sample_weight,
)
from vqtok.serialize import BOW, EOW
from vqtok.tokenizer import (
    SAMPLING,
    ScoreParams,
    detokenize,
    sample_tokenizations,
    score,
    tokenize_text,
    tokenize_word,
)
from vqtok.vocab import build_dawg, iter_prefixes


def report(name: str, detail: str = "") -> None:
    print(f"\n[ACCEPTANCE] {name} PASS {detail}".rstrip())


def test_a1_optimal_search_matches_exhaustive_enumeration():
    start = time.monotonic()
    rng = np.random.default_rng(20260801)
    alphabet = b"abcd"
    marker_configs = ((True, True), (True, False), (False, True), (False, False))
    for _ in range(1000):
        spec = []
        seen = set()
        for _ in range(int(rng.integers(10, 50))):
            length = int(rng.integers(1, 5))
            content = bytes(alphabet[i] for i in rng.integers(0, len(alphabet), size=length))
            config = (bool(rng.integers(0, 2)), bool(rng.integers(0, 2)))
            if (content, *config) in seen:
                continue
            seen.add((content, *config))
            spec.append((content, *config, -float(np.round(rng.uniform(0, 5), 3))))
        for value in alphabet:
            for config in marker_configs:
                if (bytes([value]), *config) not in seen:
                    seen.add((bytes([value]), *config))
                    spec.append((bytes([value]), *config, -4.0))
        vocab = make_vocab(spec, codebook_size=64)
        dawg = build_dawg(vocab)
        raw = bytes(alphabet[i] for i in rng.integers(0, len(alphabet), size=rng.integers(1, 13)))
        alpha = float(rng.choice([0.0, 0.1, 0.5, 1.0]))
        result = tokenize_word(BoundedWord.full(raw), vocab, dawg, ScoreParams(alpha_split=alpha))
        oracle = exhaustive_best_score(raw, vocab_score_map(vocab), alpha)
        assert abs(result.total_score - oracle) <= 1e-9
    elapsed = time.monotonic() - start
    assert elapsed < 60.0
    report("A1", f"(1000 instances vs 2^(n-1) enumeration, {elapsed:.1f}s)")


def test_a2_dawg_oracles():
    start = time.monotonic()
    rng = np.random.default_rng(20260802)
    # prefix iteration vs naive scan, 1e4 cases
    for _ in range(10_000):
        n_words = int(rng.integers(1, 10))
        words = set()
        while len(words) < n_words:
            words.add(bytes(rng.integers(97, 101, size=int(rng.integers(1, 6))).astype("uint8")))
        vocab = make_vocab([(w, False, False, -1.0) for w in sorted(words)])
        dawg = build_dawg(vocab)
        suffix = tuple(int(v) for v in rng.integers(97, 101, size=int(rng.integers(0, 9))))
        naive = [
            entry.word.content
            for entry in vocab.entries
            if entry.word.symbols() == suffix[: len(entry.word.symbols())]
        ]
        naive.sort(key=len)
        found = [word.content for word, _ in iter_prefixes(dawg, suffix)]
        assert found == naive
    # membership vs hash set, 1e5 probes
    words = set()
    while len(words) < 500:
        words.add(bytes(rng.integers(97, 105, size=int(rng.integers(1, 8))).astype("uint8")))
    vocab = make_vocab([(w, False, False, -1.0) for w in sorted(words)], codebook_size=32)
    dawg = build_dawg(vocab)
    wordset = {tuple(w) for w in words}
    for _ in range(100_000):
        probe = tuple(int(v) for v in rng.integers(97, 105, size=int(rng.integers(1, 8))))
        assert dawg.accepts(probe) == (probe in wordset)
    elapsed = time.monotonic() - start
    assert elapsed < 30.0
    report("A2", f"(1e4 prefix cases + 1e5 membership probes, {elapsed:.1f}s)")


def test_a3_quantizer_oracles():
    rng = np.random.default_rng(20260803)
    # nearest-neighbor vs brute-force scan, 1e5 pairs, exact index equality
    checked = 0
    while checked < 100_000:
        k = int(rng.integers(2, 9))
        dim = int(rng.integers(1, 7))
        book = vq.Codebook(rng.normal(size=(k, dim)), np.ones(k))
        latents = rng.normal(size=(200, dim))
        indices = vq.quantize_batch(latents, book)
        distances = ((latents[:, None, :] - book.vectors[None, :, :]) ** 2).sum(axis=2)
        for row in range(200):
            best = 0
            for i in range(1, k):
                if distances[row, i] < distances[row, best]:
                    best = i
            assert int(indices[row]) == best
            assert vq.quantize(latents[row], book).index == best
        checked += 200
    # EMA hand-computed closed form to 1e-12
    book = vq.Codebook(np.zeros((2, 2)), np.array([1.0, 1.0]), decay=0.96)
    vq.ema_update(book, np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([0, 0]))
    assert abs(book.usage[0] - 1.04) <= 1e-12
    # reset fires iff usage < threshold
    book = vq.Codebook(
        np.zeros((3, 2)), np.array([0.0999999, 0.1, 0.2]), decay=0.96, reset_threshold=0.1
    )
    _, result = vq.reset_dead_codes(book, np.ones((4, 2)), rng)
    assert result.applied == [0]
    assert book.usage[0] == 1.0 and book.usage[1] == 0.1
    report("A3", "(1e5 brute-force pairs exact; EMA 1.04 at 1e-12; reset iff c<c_min)")


def test_a4_gradient_correctness():
    params, books, batch, cfg = tiny_model()
    all_layers = list(params)
    worst_identity = finite_difference_check(
        params, books, batch, cfg, "identity", all_layers, probes_per_layer=10, step=1e-4
    )
    assert worst_identity < 1e-4
    decoder_layers = ["dec_emb", "dec_w1", "dec_b1", "dec_w2", "dec_b2"]
    worst_ste = finite_difference_check(
        params, books, batch, cfg, "ste", decoder_layers, probes_per_layer=10, step=1e-4
    )
    assert worst_ste < 1e-4
    # straight-through identity Jacobian, exact
    upstream = np.random.default_rng(1).normal(size=(6, 4))
    passed, to_code = vq.straight_through_backward(upstream)
    assert np.array_equal(passed, upstream)
    assert np.array_equal(to_code, np.zeros_like(upstream))
    report("A4", f"(max rel err identity={worst_identity:.2e}, decoder={worst_ste:.2e}; STE exact)")


def test_a5_end_to_end_training(trained_checkpoint, fixture_word_list, training_seconds):
    ckpt = trained_checkpoint
    assert ckpt.config.codebook_size == 16
    assert ckpt.config.latent_dim == 32
    assert ckpt.config.steps == 5000
    matches = 0
    for word in fixture_word_list.words():
        bounded = BoundedWord.full(word)
        _, vectors = ckpt.quantize_word(bounded)
        if ckpt.greedy_decode(vectors).word == bounded:
            matches += 1
    ratio = matches / len(fixture_word_list)
    entropies = ckpt.channel_usage_entropy()
    floor = math.log(16) / 2
    assert ratio >= 0.95, f"reconstruction {ratio:.3f} < 0.95"
    assert all(h >= floor for h in entropies), f"usage entropy {entropies} below {floor:.3f}"
    assert training_seconds < 600.0, f"training took {training_seconds:.0f}s"
    report(
        "A5",
        f"(reconstruction {ratio:.1%}, entropies {[round(h, 2) for h in entropies]} >= {floor:.2f}, "
        f"train {training_seconds:.0f}s < 600s)",
    )


def test_a6_alpha_split_monotonicity(trained_vocab, fixture_word_list):
    grid = [0.0, 0.1, 0.5, 1.0, 5.0, 50.0]
    corpus_words = sorted(fixture_word_list.words())

    # mechanism on a constructed vocabulary with a guaranteed regime change
    vocab, dawg = coverage_vocab(
        b"abcdefghijklmnopqrstuvwxyz",
        [(w.encode(), True, True, -0.25 * len(w)) for w in {x.decode() for x in corpus_words}],
        codebook_size=64,
        byte_logprob=-0.05,
    )

    def mean_pieces(v, d, alpha):
        params = ScoreParams(alpha_split=alpha)
        return sum(
            len(tokenize_word(BoundedWord.full(w), v, d, params).pieces) for w in corpus_words
        ) / len(corpus_words)

    means = [mean_pieces(vocab, dawg, alpha) for alpha in grid]
    assert all(b <= a + 1e-12 for a, b in zip(means, means[1:])), means
    assert means[-1] < means[0], "no strict decrease anywhere on the grid"

    # the trained vocabulary obeys the same monotonicity
    tv, td = trained_vocab
    trained_means = [mean_pieces(tv, td, alpha) for alpha in grid]
    assert all(b <= a + 1e-12 for a, b in zip(trained_means, trained_means[1:])), trained_means
    report("A6", f"(constructed {['%.2f' % m for m in means]}, trained {['%.2f' % m for m in trained_means]})")


def test_a7_index_distribution_beats_size_matched_bpe(trained_vocab, fixture_word_list):
    tv, td = trained_vocab
    params = ScoreParams()
    triplet_stream = []
    token_stream = []
    table = bpe.train_bpe(fixture_word_list, 256 + 4096)
    for word, count in sorted(fixture_word_list.items()):
        pieces = tokenize_word(BoundedWord.full(word), tv, td, params).pieces
        triplet_stream.extend([p.triplet] * count for p in pieces)
        ids = bpe.token_ids(bpe.encode_bpe(word, table), table)
        token_stream.extend([t] * count for t in ids)
    triplets = [t for group in triplet_stream for t in group]
    tokens = [t for group in token_stream for t in group]
    hist = analysis.index_histogram(triplets, tv.codebook_size)
    bpe_hist = analysis.bpe_token_histogram(tokens, 258 + len(table))
    assert min(hist.normalized_entropies) > bpe_hist.normalized_entropy, (
        hist.normalized_entropies,
        bpe_hist.normalized_entropy,
    )
    report(
        "A7",
        f"(triplet channels {[round(h, 3) for h in hist.normalized_entropies]} > "
        f"BPE {bpe_hist.normalized_entropy:.3f}, {len(table)} merges)",
    )


def test_a8_round_trip_and_total_coverage(trained_vocab, fixture_word_list):
    tv, td = trained_vocab
    assert tv.covers_all_bytes()
    rng = np.random.default_rng(20260808)
    words = sorted(fixture_word_list.words())
    params = ScoreParams()
    for _ in range(10_000):
        raw = words[int(rng.integers(0, len(words)))]
        result = tokenize_word(BoundedWord.full(raw), tv, td, params)
        assert detokenize(result.triplets, tv) == raw
    # arbitrary UTF-8 and invalid byte sequences stay tokenizable
    hard_cases = [
        "héllo wörld 漢字 🎨".encode(),
        b"\xff\xfe\x00\x01 raw\x80bytes",
        bytes(range(1, 33)),  # every low control byte
        "ᚠᚢᚦᚨᚱᚲ".encode() + b"\xc3",  # truncated multi-byte tail
    ]

    def independent_words(raw: bytes) -> list[bytes]:
        # character-scan oracle for the pretokenization rule
        text = raw.decode("utf-8", errors="surrogateescape")
        words, current = [], []
        for char in text:
            if char.isspace():
                if current:
                    words.append("".join(current))
                    current = []
            else:
                current.append(char)
        if current:
            words.append("".join(current))
        return [w.encode("utf-8", errors="surrogateescape") for w in words]

    for raw in hard_cases:
        results = tokenize_text(raw, tv, td, params)
        stream = [t for r in results for t in r.triplets]
        expected = b" ".join(independent_words(raw))
        assert detokenize(stream, tv) == expected
    report("A8", "(1e4 fixture round-trips byte-exact; arbitrary bytes coverable)")


def test_a9_sampling_behavior():
    rng = np.random.default_rng(20260809)
    vocab = make_vocab([(b"wxyz", False, False, 0.0)])
    entry = vocab.entries[0]
    params = ScoreParams(alpha_split=0.0, sigma_sample=1.5, mode=SAMPLING)
    assert all(score(entry, params, rng) >= 0.0 for _ in range(100_000))

    near_tie = make_vocab(
        [(b"ab", True, True, -1.1), (b"a", True, False, -0.5), (b"b", False, True, -0.5)]
    )
    dawg = build_dawg(near_tie)
    sample_params = ScoreParams(alpha_split=0.1, sigma_sample=0.02, mode=SAMPLING)
    word = BoundedWord.full(b"ab")
    outcomes = {
        tuple(p.word.content for p in s.pieces)
        for s in sample_tokenizations(word, near_tie, dawg, sample_params, np.random.default_rng(7), 128)
    }
    assert len(outcomes) >= 2

    def run(seed):
        samples = sample_tokenizations(
            word, near_tie, dawg, sample_params, np.random.default_rng(seed), 32
        )
        return [(tuple(p.word.content for p in s.pieces), s.total_score) for s in samples]

    assert run(123) == run(123)
    report("A9", f"(1e5 scores >= 0; {len(outcomes)} distinct segmentations in 128 draws; seeded runs identical)")


def test_a10_noise_generator():
    rng = np.random.default_rng(20260810)
    text = ("The quick brown Fox jumps over the lazy dog 0123456789 äöü 漢字 " * 1700)[:100_000]
    assert len(text) == 100_000
    noisy, stats = analysis.perturb_with_stats(text, analysis.NoiseConfig(0.1), rng)
    assert abs(stats.rate - 0.1) <= 0.01
    noisy.encode("utf-8")  # valid Unicode throughout
    import unicodedata

    assert all(unicodedata.category(c) != "Cs" for c in noisy)
    report("A10", f"(rate {stats.rate:.4f} within 0.1±0.01; output valid Unicode)")


def test_a11_bpe_baseline():
    flist = WordFrequencyList({b"banana": 1})
    table = bpe.train_bpe(flist, 257)
    assert table.merges == [((97,), (110,))]
    pieces = bpe.encode_bpe(b"banana", table)
    assert pieces == [(BOW,), (98,), (97, 110), (97, 110), (97,), (EOW,)]

    rng = np.random.default_rng(20260811)
    big = bpe.train_bpe(
        WordFrequencyList({b"banana": 3, b"bandana": 2, b"cabana": 1}), 300
    )
    near_one = bpe.encode_bpe(b"banana", big, dropout_p=1 - 1e-15, rng=rng)
    assert near_one == bpe.word_symbols(b"banana")

    words = [bytes(rng.integers(97, 103, size=int(rng.integers(1, 12))).astype("uint8")) for _ in range(250)]
    flist = WordFrequencyList({w: int(c) for w, c in zip(words, rng.integers(1, 40, size=len(words)))})
    table = bpe.train_bpe(flist, 290)
    for _ in range(10_000):
        probe = bytes(rng.integers(97, 103, size=int(rng.integers(1, 14))).astype("uint8"))
        assert bpe.encode_bpe(probe, table) == naive_encode(probe, table)
    report("A11", "(banana merge exact; p->1 raw symbols; 1e4 words match naive-merge oracle)")


def test_a12_sampling_distribution_arithmetic():
    for f in (1, 2, 3, 10, 997, 123456, math.e - 1, 7.5):
        product = sample_weight(f) * loss_weight(f)
        assert abs(product - f) / f < 1e-12
    flist = WordFrequencyList({b"x": 1, b"y": math.e - 1})
    w_x = sample_weight(1)
    p = w_x / (w_x + sample_weight(math.e - 1))
    rng = np.random.default_rng(20260812)
    n = 1_000_000
    hits = 0
    for _ in range(n):
        drawn = draw_training_example(flist, rng)
        word = drawn if isinstance(drawn, BoundedWord) else drawn[0]
        if word.content.startswith(b"x"):
            hits += 1
    sigma = math.sqrt(n * p * (1 - p))
    deviation = abs(hits - n * p)
    assert deviation <= 3 * sigma
    report("A12", f"(weights multiply back at 1e-12; draws within {deviation/sigma:.2f} sigma of expectation)")
