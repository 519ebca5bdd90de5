"""Shared fixtures: synthetic corpora, toy vocabularies, and the cached
desk-scale training run reused by the end-to-end acceptance tests."""

import os

# the end-to-end acceptance run is specified as single-threaded; pin the BLAS
# pools before numpy loads
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import hashlib
import json
import pathlib
import time

import numpy as np
import pytest

from vqtok import WordFrequencyList
from vqtok.autoencoder import Checkpoint, ModelConfig, train
from vqtok.corpus import BoundedWord
from vqtok.vocab import (
    Vocabulary,
    VocabularyEntry,
    build_dawg,
    build_vocabulary,
    read_vocabulary,
    write_vocabulary,
)

FIXTURE_SEED = 1234
TRAIN_SEED = 20260808

_CACHE_DIR = pathlib.Path(__file__).resolve().parent / "_cache"


def synthetic_word_list(n: int = 200, seed: int = FIXTURE_SEED) -> WordFrequencyList:
    """Deterministic 200-word frequency list with a flattened Zipf shape."""
    rng = np.random.default_rng(seed)
    letters = "abcdefghijklmnopqrstuvwxyz"
    stems: set[str] = set()
    while len(stems) < n:
        length = int(rng.integers(3, 10))
        stems.add("".join(letters[rng.integers(0, 26)] for _ in range(length)))
    words = sorted(stems)
    return WordFrequencyList(
        {w.encode(): max(1, int(400 / (i + 1) ** 0.35)) for i, w in enumerate(words)}
    )


def synthetic_text(flist: WordFrequencyList, n_words: int = 2000, seed: int = FIXTURE_SEED) -> bytes:
    """Sample running text from a frequency list, 12 words per line."""
    rng = np.random.default_rng(seed)
    words = sorted(flist.words())
    weights = np.array([float(flist[w]) for w in words])
    weights /= weights.sum()
    picks = rng.choice(len(words), size=n_words, p=weights)
    lines = []
    for start in range(0, n_words, 12):
        lines.append(b" ".join(words[i] for i in picks[start : start + 12]))
    return b"\n".join(lines) + b"\n"


def make_vocab(entries_spec, codebook_size: int = 64) -> Vocabulary:
    """Build a toy vocabulary from (content, has_bow, has_eow, logprob) rows;
    triplets are assigned sequentially."""
    entries = []
    for index, (content, has_bow, has_eow, logprob) in enumerate(entries_spec):
        triplet = (
            index % codebook_size,
            (index // codebook_size) % codebook_size,
            index // (codebook_size * codebook_size),
        )
        entries.append(VocabularyEntry(BoundedWord(content, has_bow, has_eow), triplet, logprob))
    return Vocabulary(entries, codebook_size)


def coverage_vocab(alphabet: bytes, extra_spec=(), codebook_size: int = 64, byte_logprob: float = -4.0):
    """Toy vocabulary with full coverage of an alphabet (all four marker
    configurations per byte) plus extra multi-byte entries."""
    spec = list(extra_spec)
    for value in alphabet:
        for bow, eow in ((True, True), (True, False), (False, True), (False, False)):
            spec.append((bytes([value]), bow, eow, byte_logprob))
    vocab = make_vocab(spec, codebook_size)
    return vocab, build_dawg(vocab)


def _source_digest(names) -> str:
    src = pathlib.Path(__file__).resolve().parent.parent / "src" / "vqtok"
    digest = hashlib.sha256()
    for name in names:
        digest.update((src / name).read_bytes())
    return digest.hexdigest()[:16]


def _train_cache_key() -> str:
    cfg = ModelConfig()
    return hashlib.sha256(
        (
            _source_digest(("corpus.py", "vq.py", "autoencoder.py"))
            + cfg.to_json()
            + str(TRAIN_SEED)
            + str(FIXTURE_SEED)
        ).encode()
    ).hexdigest()[:24]


@pytest.fixture(scope="session")
def fixture_word_list() -> WordFrequencyList:
    return synthetic_word_list()


@pytest.fixture(scope="session")
def trained_checkpoint(fixture_word_list) -> Checkpoint:
    """The desk-scale training run (A5 configuration), cached on disk keyed
    by the sources that determine its bits."""
    _CACHE_DIR.mkdir(exist_ok=True)
    path = _CACHE_DIR / f"checkpoint_{_train_cache_key()}.bin"
    if path.exists():
        return Checkpoint.load(path)
    started = time.monotonic()
    checkpoint = train(fixture_word_list, ModelConfig(), TRAIN_SEED)
    elapsed = time.monotonic() - started
    checkpoint.save(path)
    path.with_suffix(".meta.json").write_text(json.dumps({"train_seconds": elapsed}))
    return checkpoint


@pytest.fixture(scope="session")
def training_seconds(trained_checkpoint) -> float:
    """Wall time of the run that produced the cached checkpoint."""
    meta = _CACHE_DIR / f"checkpoint_{_train_cache_key()}.meta.json"
    return json.loads(meta.read_text())["train_seconds"]


@pytest.fixture(scope="session")
def trained_vocab(trained_checkpoint):
    """Vocabulary + automaton decoded from the trained checkpoint, cached."""
    _CACHE_DIR.mkdir(exist_ok=True)
    key = hashlib.sha256(
        (_train_cache_key() + _source_digest(("vocab.py",))).encode()
    ).hexdigest()[:24]
    path = _CACHE_DIR / f"vocab_{key}.bin"
    if path.exists():
        return read_vocabulary(path)
    vocab = build_vocabulary(trained_checkpoint)
    dawg = build_dawg(vocab)
    write_vocabulary(path, vocab, dawg)
    return vocab, dawg
