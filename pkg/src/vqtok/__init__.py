"""vqtok: subword tokenization via learned discrete index triplets.

A small auto-encoder with three vector-quantization bottlenecks maps each
subword to a triplet of codebook indices. The decoded static vocabulary of
(subword, triplet, log-probability) tuples drives an optimal (or stochastic)
tokenizer implemented as shortest-path search over a DAWG of subwords. A
byte-level BPE baseline and analysis utilities round out the toolkit.
"""

from .corpus import (
    BoundedWord,
    WordFrequencyList,
    draw_training_example,
    extract_frequencies,
    loss_weight,
    not_split_probability,
    sample_weight,
)
from .autoencoder import Checkpoint, ModelConfig, train
from .vocab import SubwordDawg, Vocabulary, VocabularyEntry, build_dawg, build_vocabulary, iter_prefixes
from .tokenizer import (
    ScoreParams,
    Tokenization,
    detokenize,
    sample_tokenizations,
    score,
    tokenize_text,
    tokenize_word,
)
from .bpe import MergeTable, encode_bpe, train_bpe

__version__ = "0.1.0"

__all__ = [
    "BoundedWord",
    "Checkpoint",
    "MergeTable",
    "ModelConfig",
    "ScoreParams",
    "SubwordDawg",
    "Tokenization",
    "Vocabulary",
    "VocabularyEntry",
    "WordFrequencyList",
    "build_dawg",
    "build_vocabulary",
    "detokenize",
    "draw_training_example",
    "encode_bpe",
    "extract_frequencies",
    "iter_prefixes",
    "loss_weight",
    "not_split_probability",
    "sample_tokenizations",
    "sample_weight",
    "score",
    "tokenize_text",
    "tokenize_word",
    "train",
    "train_bpe",
]
