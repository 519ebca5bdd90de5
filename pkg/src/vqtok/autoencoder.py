"""Desk-scale auto-encoder over subwords with three quantization bottlenecks.

The encoder pools per-symbol embeddings (mean, position-weighted mean, first
and last symbol, length) through a tanh layer into three latent heads, one
per channel. Each latent is snapped to its channel codebook; the quantized
triplet, concatenated with a fixed-width history window of already-emitted
symbols, drives an autoregressive next-symbol decoder. Gradients are fully
explicit (no autograd): the decoder gradient reaches the encoder through the
straight-through estimator, codebooks follow EMA updates, and a decayed copy
of all parameters is kept for inference.

Sequences that end with the end-of-word marker terminate there; unmarked
subwords terminate by emitting the padding symbol, which the decoder also
predicts (259 output logits).
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import struct
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Union

import numpy as np

from . import corpus as corpus_mod
from . import vq
from .corpus import BoundedWord, WordFrequencyList, loss_weight
from .errors import FormatError, TrainingDivergedError, WordLengthError
from .serialize import BOW, EOW, NUM_SYMBOLS, PAD

logger = logging.getLogger(__name__)

_CHECKPOINT_MAGIC = b"VQAE"
_CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters; the desk-scale defaults train in minutes on a CPU."""

    codebook_size: int = 16
    num_codebooks: int = 3
    latent_dim: int = 32
    hidden_dim: int = 192
    emb_dim: int = 16
    context_width: int = 8
    max_word_length: int = 64  # symbols, markers included
    beta: float = 0.5
    beta_warmup_steps: int = 500  # commitment ramps 0 -> beta; avoids early encoder collapse
    codebook_decay: float = 0.96
    weight_ema_decay: float = 0.999
    reset_threshold: float = 0.25
    steps: int = 5000
    batch_size: int = 128
    lr_initial: float = 0.2
    lr_final: float = 0.02
    grad_clip: float = 25.0  # global-norm cap; 0 disables
    loss_spike_factor: float = 4.0  # reject steps whose loss spikes this far above the running average; 0 disables
    beam_width: int = 8
    log_every: int = 250

    def __post_init__(self) -> None:
        if self.num_codebooks != 3:
            raise ValueError("the model uses exactly three codebooks")
        if self.codebook_size < 2:
            raise ValueError("codebook_size must be >= 2")

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        return cls(**json.loads(text))


class DecodeResult(NamedTuple):
    word: BoundedWord
    logprob: float
    forced: bool  # True when no candidate terminated within the length limit


class Batch(NamedTuple):
    enc_symbols: np.ndarray  # (B, N) int64, PAD-filled
    enc_mask: np.ndarray  # (B, N) float64
    lengths: np.ndarray  # (B,) int64
    targets: np.ndarray  # (B, T) int64, PAD-filled
    target_mask: np.ndarray  # (B, T) float64
    weights: np.ndarray  # (B,) float64 loss weights


# -----------------------------
# parameters
# -----------------------------

def init_parameters(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    de, dd, h, d = cfg.emb_dim, cfg.emb_dim, cfg.hidden_dim, cfg.latent_dim
    feat = 4 * de + 1
    dec_in = 3 * d + cfg.context_width * dd

    def dense(rows, cols, gain=1.0):
        return rng.normal(0.0, gain / math.sqrt(cols), size=(rows, cols))

    return {
        "enc_emb": rng.normal(0.0, 0.5, size=(NUM_SYMBOLS, de)),
        "enc_w1": dense(h, feat),
        "enc_b1": np.zeros(h),
        "enc_head_r": dense(d, h),
        "enc_bias_r": np.zeros(d),
        "enc_head_g": dense(d, h),
        "enc_bias_g": np.zeros(d),
        "enc_head_b": dense(d, h),
        "enc_bias_b": np.zeros(d),
        "dec_emb": rng.normal(0.0, 0.5, size=(NUM_SYMBOLS, dd)),
        "dec_w1": dense(h, dec_in),
        "dec_b1": np.zeros(h),
        "dec_w2": dense(NUM_SYMBOLS, h),
        "dec_b2": np.zeros(NUM_SYMBOLS),
    }


def ema_parameters(live: dict[str, np.ndarray], ema_copy: dict[str, np.ndarray], decay: float) -> dict[str, np.ndarray]:
    """In-place ema <- decay*ema + (1-decay)*live for every tensor."""
    for name, value in live.items():
        target = ema_copy[name]
        if target.shape != value.shape:
            raise ValueError(f"shape mismatch for {name}: {target.shape} vs {value.shape}")
        target *= decay
        target += (1.0 - decay) * value
    return ema_copy


# -----------------------------
# batch assembly
# -----------------------------

def target_symbols(word: BoundedWord) -> tuple[int, ...]:
    """Decoder target sequence: the word's symbols, PAD-terminated when the
    word carries no end marker."""
    syms = word.symbols()
    return syms if word.has_eow else syms + (PAD,)


def make_batch(examples: Iterable[tuple[BoundedWord, float]], cfg: ModelConfig) -> Batch:
    words = [(w.symbols(), target_symbols(w), weight) for w, weight in examples]
    b = len(words)
    nmax = max(len(s) for s, _, _ in words)
    tmax = max(len(t) for _, t, _ in words)
    enc = np.full((b, nmax), PAD, dtype=np.int64)
    emask = np.zeros((b, nmax))
    lengths = np.zeros(b, dtype=np.int64)
    tgt = np.full((b, tmax), PAD, dtype=np.int64)
    tmask = np.zeros((b, tmax))
    weights = np.zeros(b)
    for i, (syms, targets, weight) in enumerate(words):
        enc[i, : len(syms)] = syms
        emask[i, : len(syms)] = 1.0
        lengths[i] = len(syms)
        tgt[i, : len(targets)] = targets
        tmask[i, : len(targets)] = 1.0
        weights[i] = weight
    return Batch(enc, emask, lengths, tgt, tmask, weights)


def _history_windows(targets: np.ndarray, context: int) -> np.ndarray:
    """(B, T, C) window of the C symbols preceding each target position."""
    b, t = targets.shape
    full = np.concatenate([np.full((b, context), PAD, dtype=np.int64), targets[:, : t - 1]], axis=1)
    idx = np.arange(t)[:, None] + np.arange(context)[None, :]
    return full[:, idx]


# -----------------------------
# forward / backward
# -----------------------------

def _encoder_forward(params, batch: Batch, cfg: ModelConfig):
    emb = params["enc_emb"][batch.enc_symbols]  # (B, N, De)
    n = batch.lengths[:, None].astype(np.float64)
    positions = np.arange(batch.enc_symbols.shape[1], dtype=np.float64)[None, :]
    pos = ((positions - (n - 1.0) / 2.0) / n) * batch.enc_mask  # centered, length-normalized
    mean = np.einsum("bn,bnd->bd", batch.enc_mask, emb) / n
    posv = np.einsum("bn,bnd->bd", pos, emb) / n
    first = params["enc_emb"][batch.enc_symbols[:, 0]]
    last = params["enc_emb"][batch.enc_symbols[np.arange(len(n)), batch.lengths - 1]]
    lenf = n / cfg.max_word_length
    x = np.concatenate([mean, posv, first, last, lenf], axis=1)
    h = np.tanh(x @ params["enc_w1"].T + params["enc_b1"])
    latents = np.stack(
        [h @ params[f"enc_head_{c}"].T + params[f"enc_bias_{c}"] for c in "rgb"], axis=1
    )  # (B, 3, D)
    return latents, (x, h, pos)


def _encoder_backward(params, batch: Batch, cache, dlatents, grads) -> None:
    x, h, pos = cache
    de = params["enc_emb"].shape[1]
    dh = np.zeros_like(h)
    for ci, c in enumerate("rgb"):
        dc = dlatents[:, ci, :]
        grads[f"enc_head_{c}"] += dc.T @ h
        grads[f"enc_bias_{c}"] += dc.sum(axis=0)
        dh += dc @ params[f"enc_head_{c}"]
    da = dh * (1.0 - h * h)
    grads["enc_w1"] += da.T @ x
    grads["enc_b1"] += da.sum(axis=0)
    dx = da @ params["enc_w1"]
    dmean = dx[:, :de]
    dposv = dx[:, de : 2 * de]
    dfirst = dx[:, 2 * de : 3 * de]
    dlast = dx[:, 3 * de : 4 * de]
    n = batch.lengths[:, None].astype(np.float64)
    contrib = (batch.enc_mask / n)[:, :, None] * dmean[:, None, :]
    contrib += (pos / n)[:, :, None] * dposv[:, None, :]
    np.add.at(grads["enc_emb"], batch.enc_symbols, contrib)
    np.add.at(grads["enc_emb"], batch.enc_symbols[:, 0], dfirst)
    rows = np.arange(len(n))
    np.add.at(grads["enc_emb"], batch.enc_symbols[rows, batch.lengths - 1], dlast)


def _decoder_forward(params, quantized: np.ndarray, batch: Batch, cfg: ModelConfig):
    b, t = batch.targets.shape
    windows = _history_windows(batch.targets, cfg.context_width)
    hist = params["dec_emb"][windows].reshape(b, t, -1)
    zflat = quantized.reshape(b, -1)
    u = np.concatenate([np.broadcast_to(zflat[:, None, :], (b, t, zflat.shape[1])), hist], axis=2)
    g = np.tanh(u @ params["dec_w1"].T + params["dec_b1"])
    logits = g @ params["dec_w2"].T + params["dec_b2"]
    shifted = logits - logits.max(axis=2, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=2)) + logits.max(axis=2)
    picked = np.take_along_axis(logits, batch.targets[:, :, None], axis=2)[:, :, 0]
    logprobs = (picked - logz) * batch.target_mask  # (B, T)
    nll = -logprobs.sum(axis=1)  # (B,)
    return nll, (windows, u, g, logits, logz)


def _decoder_backward(params, batch: Batch, cache, scale: np.ndarray, cfg: ModelConfig, grads):
    """Gradient of sum_b scale_b * nll_b; returns the gradient w.r.t. the
    quantized triplet vectors."""
    windows, u, g, logits, logz = cache
    b, t = batch.targets.shape
    soft = np.exp(logits - logz[:, :, None])
    do = soft
    rows = np.arange(b)[:, None]
    cols = np.arange(t)[None, :]
    do[rows, cols, batch.targets] -= 1.0
    do *= (batch.target_mask * scale[:, None])[:, :, None]
    flat_do = do.reshape(b * t, -1)
    flat_g = g.reshape(b * t, -1)
    grads["dec_w2"] += flat_do.T @ flat_g
    grads["dec_b2"] += flat_do.sum(axis=0)
    dg = do @ params["dec_w2"]
    da = dg * (1.0 - g * g)
    flat_da = da.reshape(b * t, -1)
    grads["dec_w1"] += flat_da.T @ u.reshape(b * t, -1)
    grads["dec_b1"] += flat_da.sum(axis=0)
    du = da @ params["dec_w1"]
    zdim = 3 * cfg.latent_dim
    dquant = du[:, :, :zdim].sum(axis=1).reshape(b, 3, cfg.latent_dim)
    dhist = du[:, :, zdim:].reshape(b, t, cfg.context_width, -1)
    np.add.at(grads["dec_emb"], windows, dhist)
    return dquant


def model_loss_and_grads(
    params: dict[str, np.ndarray],
    codebooks: list[vq.Codebook],
    batch: Batch,
    cfg: ModelConfig,
    mode: str = "ste",
    beta: float | None = None,
):
    """One weighted-mean forward/backward pass.

    mode "ste": decoder consumes the quantized vectors, gradient reaches the
    encoder via the straight-through estimator. mode "identity": the decoder
    consumes the latents directly (quantization treated as identity), which
    makes the whole loss differentiable for finite-difference checking.
    """
    if mode not in ("ste", "identity"):
        raise ValueError(f"unknown mode {mode!r}")
    if beta is None:
        beta = cfg.beta
    latents, enc_cache = _encoder_forward(params, batch, cfg)
    b = latents.shape[0]
    assignments = np.stack(
        [vq.quantize_batch(latents[:, c, :], codebooks[c]) for c in range(3)], axis=1
    )  # (B, 3)
    zvecs = np.stack(
        [codebooks[c].vectors[assignments[:, c]] for c in range(3)], axis=1
    )  # (B, 3, D)
    decoder_input = latents if mode == "identity" else np.stack(
        [vq.straight_through(latents[:, c, :], zvecs[:, c, :]) for c in range(3)], axis=1
    )

    nll, dec_cache = _decoder_forward(params, decoder_input, batch, cfg)
    commit = np.sum((latents - zvecs) ** 2, axis=(1, 2))  # (B,)
    total_weight = batch.weights.sum()
    scale = batch.weights / total_weight
    loss = float(np.sum(scale * (nll + beta * commit)))

    grads = {name: np.zeros_like(value) for name, value in params.items()}
    dquant = _decoder_backward(params, batch, dec_cache, scale, cfg, grads)
    if mode == "identity":
        dlatents = dquant.copy()
    else:
        dlatents = np.empty_like(dquant)
        for c in range(3):
            passed, to_codebook = vq.straight_through_backward(dquant[:, c, :])
            dlatents[:, c, :] = passed
            assert not to_codebook.any()
    dlatents += (2.0 * beta * scale[:, None, None]) * (latents - zvecs)
    _encoder_backward(params, batch, enc_cache, dlatents, grads)

    aux = {
        "latents": latents,
        "assignments": assignments,
        "nll": nll,
        "commitment": commit,
        "weighted_nll": float(np.sum(scale * nll)),
    }
    return loss, grads, aux


# -----------------------------
# inference helpers
# -----------------------------

def _word_batch(word: BoundedWord, cfg: ModelConfig) -> Batch:
    return make_batch([(word, 1.0)], cfg)


def encode_with_params(params, word: BoundedWord, cfg: ModelConfig) -> np.ndarray:
    if word.num_symbols > cfg.max_word_length:
        raise WordLengthError(word.num_symbols, cfg.max_word_length)
    latents, _ = _encoder_forward(params, _word_batch(word, cfg), cfg)
    return latents[0]


def decode_logprob_with_params(params, triplet_vectors: np.ndarray, word: BoundedWord, cfg: ModelConfig) -> float:
    zvecs = np.asarray(triplet_vectors, dtype=np.float64)
    if zvecs.shape != (3, cfg.latent_dim):
        raise ValueError(f"expected 3 vectors of dimension {cfg.latent_dim}, got {zvecs.shape}")
    batch = _word_batch(word, cfg)
    nll, _ = _decoder_forward(params, zvecs[None, :, :], batch, cfg)
    return float(-nll[0])


def decode_logprob_many_with_params(
    params, triplet_vectors: np.ndarray, word: BoundedWord, cfg: ModelConfig, chunk: int = 1024
) -> np.ndarray:
    """log p(word | z) for many triplet vector sets at once: (T, 3, D) -> (T,)."""
    zmat = np.asarray(triplet_vectors, dtype=np.float64)
    targets = np.array(target_symbols(word), dtype=np.int64)[None, :]
    tmask = np.ones_like(targets, dtype=np.float64)
    windows = _history_windows(targets, cfg.context_width)[0]  # (T, C)
    hist = params["dec_emb"][windows].reshape(targets.shape[1], -1)  # (T, C*Dd)
    zdim = 3 * cfg.latent_dim
    w_z = params["dec_w1"][:, :zdim]  # (H, 3D)
    w_h = params["dec_w1"][:, zdim:]
    pre_hist = hist @ w_h.T + params["dec_b1"]  # (T, H)
    out = np.empty(zmat.shape[0])
    for start in range(0, zmat.shape[0], chunk):
        zs = zmat[start : start + chunk].reshape(-1, zdim)
        pre_z = zs @ w_z.T  # (M, H)
        g = np.tanh(pre_z[:, None, :] + pre_hist[None, :, :])  # (M, T, H)
        logits = g @ params["dec_w2"].T + params["dec_b2"]
        mx = logits.max(axis=2)
        logz = np.log(np.exp(logits - mx[:, :, None]).sum(axis=2)) + mx
        picked = logits[:, np.arange(targets.shape[1]), targets[0]]
        out[start : start + chunk] = (picked - logz).sum(axis=1)
    return out


def decode_logprob_argmax_with_params(
    params,
    triplet_vectors: np.ndarray,
    word: BoundedWord,
    cfg: ModelConfig,
    incumbent_index: int,
    margin: float = 1e-2,
) -> tuple[int, float]:
    """Exact argmax_i log p(word | z_i) over (T, 3, D) candidate vectors.

    Per-position log-probabilities only decrease a running total, so after
    scoring the incumbent exactly, candidates whose float32 partial score
    (plus a safety margin) falls below it are pruned position by position;
    the survivors are rescored in float64. Ties resolve to the lowest index.
    """
    zmat = np.asarray(triplet_vectors, dtype=np.float64)
    best_value = decode_logprob_with_params(params, zmat[incumbent_index], word, cfg)

    targets = np.array(target_symbols(word), dtype=np.int64)[None, :]
    windows = _history_windows(targets, cfg.context_width)[0]
    hist = params["dec_emb"][windows].reshape(targets.shape[1], -1)
    zdim = 3 * cfg.latent_dim
    w_z = params["dec_w1"][:, :zdim].astype(np.float32)
    w_h = params["dec_w1"][:, zdim:]
    w_out = params["dec_w2"].astype(np.float32)
    b_out = params["dec_b2"].astype(np.float32)
    pre_hist = (hist @ w_h.T + params["dec_b1"]).astype(np.float32)  # (P, H)
    pre_z = zmat.reshape(-1, zdim).astype(np.float32) @ w_z.T  # (T, H)

    alive = np.arange(zmat.shape[0])
    partial = np.zeros(zmat.shape[0], dtype=np.float32)
    for position in range(targets.shape[1]):
        g = np.tanh(pre_z[alive] + pre_hist[position])
        logits = g @ w_out.T + b_out
        peak = logits.max(axis=1)
        logz = np.log(np.exp(logits - peak[:, None]).sum(axis=1)) + peak
        partial[alive] += logits[:, targets[0, position]] - logz
        alive = alive[partial[alive] >= best_value - margin]
        if alive.size == 0:
            break

    candidates = set(int(i) for i in alive)
    candidates.add(int(incumbent_index))
    ordered = sorted(candidates)
    exact = decode_logprob_many_with_params(params, zmat[ordered], word, cfg)
    winner = int(np.argmax(exact))
    return ordered[winner], float(exact[winner])


def _step_logprobs(params, zflat: np.ndarray, histories: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    """Next-symbol log-probabilities for a batch of beam histories (M, C)."""
    hist = params["dec_emb"][histories].reshape(histories.shape[0], -1)
    u = np.concatenate([np.broadcast_to(zflat, (histories.shape[0], zflat.shape[0])), hist], axis=1)
    g = np.tanh(u @ params["dec_w1"].T + params["dec_b1"])
    logits = g @ params["dec_w2"].T + params["dec_b2"]
    mx = logits.max(axis=1, keepdims=True)
    return logits - (np.log(np.exp(logits - mx).sum(axis=1, keepdims=True)) + mx)


def greedy_decode_with_params(
    params, triplet_vectors: np.ndarray, cfg: ModelConfig, beam_width: int | None = None
) -> DecodeResult:
    """Approximate argmax_w p(w | z) by beam search.

    A sequence completes by emitting the end-of-word marker or, for unmarked
    subwords, the padding terminator. Width 1 is pure per-step argmax; wider
    beams are additionally seeded with the greedy rollout, so widening the
    beam can never return a lower-scoring word. If nothing completes within
    the length limit, the best length-capped candidate is returned with
    `forced` set.
    """
    width = beam_width if beam_width is not None else cfg.beam_width
    zflat = np.asarray(triplet_vectors, dtype=np.float64).reshape(-1)
    max_len = cfg.max_word_length

    completed: list[tuple[float, tuple[int, ...], bool]] = []  # (logprob, symbols, has_eow)
    forced: list[tuple[float, tuple[int, ...]]] = []

    def run(k: int) -> None:
        live_syms: list[tuple[int, ...]] = [()]
        live_scores = np.zeros(1)
        while live_syms:
            histories = np.full((len(live_syms), cfg.context_width), PAD, dtype=np.int64)
            for i, syms in enumerate(live_syms):
                tail = syms[-cfg.context_width :]
                if tail:
                    histories[i, -len(tail) :] = tail
            total = live_scores[:, None] + _step_logprobs(params, zflat, histories, cfg)
            for i, syms in enumerate(live_syms):
                if syms:
                    total[i, BOW] = -np.inf  # marker allowed only in first position
                content = len(syms) - (1 if syms and syms[0] == BOW else 0)
                if content == 0:
                    total[i, EOW] = -np.inf  # a subword needs at least one byte
                    total[i, PAD] = -np.inf
            order = np.argsort(-total, axis=None, kind="stable")[:k]
            next_syms: list[tuple[int, ...]] = []
            next_scores: list[float] = []
            for flat_index in order:
                i, sym = divmod(int(flat_index), NUM_SYMBOLS)
                score = float(total[i, sym])
                if score == -np.inf:
                    break
                if sym == EOW:
                    completed.append((score, live_syms[i] + (EOW,), True))
                elif sym == PAD:
                    completed.append((score, live_syms[i], False))
                else:
                    grown = live_syms[i] + (sym,)
                    if len(grown) >= max_len:
                        forced.append((score, grown))
                    else:
                        next_syms.append(grown)
                        next_scores.append(score)
            live_syms = next_syms
            live_scores = np.array(next_scores)

    run(1)  # greedy baseline keeps the beam result >= pure greedy
    if width > 1:
        run(width)
    if completed:
        score, symbols, _ = max(completed, key=lambda c: (c[0], tuple(-s for s in c[1])))
        return DecodeResult(BoundedWord.from_symbols(symbols), score, False)
    score, symbols = max(forced, key=lambda c: (c[0], tuple(-s for s in c[1])))
    return DecodeResult(BoundedWord.from_symbols(symbols), score, True)


# -----------------------------
# checkpoint
# -----------------------------

class Checkpoint:
    """Trained model state: live and EMA parameters, three codebooks, the
    triplet usage counts collected during training, and the config."""

    def __init__(
        self,
        params: dict[str, np.ndarray],
        ema_params: dict[str, np.ndarray],
        codebooks: list[vq.Codebook],
        usage: dict[tuple[int, int, int], int],
        config: ModelConfig,
        step: int = 0,
        seed: int = 0,
    ):
        if set(params) != set(ema_params):
            raise ValueError("live and EMA parameter sets differ")
        for name in params:
            if params[name].shape != ema_params[name].shape:
                raise ValueError(f"EMA copy of {name} has a different shape")
        self.params = params
        self.ema_params = ema_params
        self.codebooks = codebooks
        self.usage = dict(usage)
        self.config = config
        self.step = step
        self.seed = seed

    # inference always runs on the EMA parameter copy

    def encode(self, word: BoundedWord) -> np.ndarray:
        return encode_with_params(self.ema_params, word, self.config)

    def quantize_word(self, word: BoundedWord) -> tuple[tuple[int, int, int], np.ndarray]:
        latents = self.encode(word)
        results = [vq.quantize(latents[c], self.codebooks[c]) for c in range(3)]
        triplet = tuple(r.index for r in results)
        return triplet, np.stack([r.vector for r in results])

    def triplet_vectors(self, triplet: tuple[int, int, int]) -> np.ndarray:
        return np.stack([self.codebooks[c].vectors[triplet[c]] for c in range(3)])

    def decode_logprob(self, triplet_vectors: np.ndarray, word: BoundedWord) -> float:
        return decode_logprob_with_params(self.ema_params, triplet_vectors, word, self.config)

    def decode_logprob_many(self, triplet_vectors: np.ndarray, word: BoundedWord) -> np.ndarray:
        return decode_logprob_many_with_params(self.ema_params, triplet_vectors, word, self.config)

    def decode_logprob_argmax(
        self, triplet_vectors: np.ndarray, word: BoundedWord, incumbent_index: int
    ) -> tuple[int, float]:
        return decode_logprob_argmax_with_params(
            self.ema_params, triplet_vectors, word, self.config, incumbent_index
        )

    def greedy_decode(self, triplet_vectors: np.ndarray, beam_width: int | None = None) -> DecodeResult:
        return greedy_decode_with_params(self.ema_params, triplet_vectors, self.config, beam_width)

    def used_triplets(self) -> list[tuple[int, int, int]]:
        return sorted(t for t, count in self.usage.items() if count > 0)

    def channel_usage_entropy(self) -> list[float]:
        """Entropy (nats) of each codebook's EMA usage distribution."""
        out = []
        for book in self.codebooks:
            p = book.usage / book.usage.sum()
            p = p[p > 0]
            out.append(float(-(p * np.log(p)).sum()))
        return out

    # ---- serialization ----

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    def to_bytes(self) -> bytes:
        out = bytearray()
        out += _CHECKPOINT_MAGIC
        out += struct.pack("<I", _CHECKPOINT_VERSION)
        header = json.dumps(
            {"config": dataclasses.asdict(self.config), "step": self.step, "seed": self.seed},
            sort_keys=True,
        ).encode("utf-8")
        out += struct.pack("<I", len(header))
        out += header
        for group in (self.params, self.ema_params):
            out += struct.pack("<I", len(group))
            for name in sorted(group):
                arr = np.ascontiguousarray(group[name], dtype="<f8")
                encoded = name.encode("ascii")
                out += struct.pack("<H", len(encoded))
                out += encoded
                out += struct.pack("<B", arr.ndim)
                out += struct.pack(f"<{arr.ndim}I", *arr.shape)
                out += arr.tobytes()
        out += struct.pack("<B", len(self.codebooks))
        for book in self.codebooks:
            out += struct.pack("<IIdd", book.size, book.dim, book.decay, book.reset_threshold)
            out += np.ascontiguousarray(book.vectors, dtype="<f8").tobytes()
            out += np.ascontiguousarray(book.usage, dtype="<f8").tobytes()
        out += struct.pack("<Q", len(self.usage))
        for triplet in sorted(self.usage):
            out += struct.pack("<HHHQ", *triplet, self.usage[triplet])
        return bytes(out)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        if data[:4] != _CHECKPOINT_MAGIC:
            raise FormatError("not a checkpoint file", expected=_CHECKPOINT_MAGIC, found=data[:4])
        pos = 4
        (version,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if version != _CHECKPOINT_VERSION:
            raise FormatError("unsupported checkpoint version", expected=_CHECKPOINT_VERSION, found=version)
        (hlen,) = struct.unpack_from("<I", data, pos)
        pos += 4
        header = json.loads(data[pos : pos + hlen].decode("utf-8"))
        pos += hlen
        config = ModelConfig(**header["config"])

        def read_group(pos):
            (count,) = struct.unpack_from("<I", data, pos)
            pos += 4
            group = {}
            for _ in range(count):
                (nlen,) = struct.unpack_from("<H", data, pos)
                pos += 2
                name = data[pos : pos + nlen].decode("ascii")
                pos += nlen
                (ndim,) = struct.unpack_from("<B", data, pos)
                pos += 1
                shape = struct.unpack_from(f"<{ndim}I", data, pos)
                pos += 4 * ndim
                size = int(np.prod(shape)) if shape else 1
                group[name] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape).copy()
                pos += 8 * size
            return group, pos

        params, pos = read_group(pos)
        ema_params, pos = read_group(pos)
        (nbooks,) = struct.unpack_from("<B", data, pos)
        pos += 1
        codebooks = []
        for _ in range(nbooks):
            k, d, decay, threshold = struct.unpack_from("<IIdd", data, pos)
            pos += struct.calcsize("<IIdd")
            vectors = np.frombuffer(data, dtype="<f8", count=k * d, offset=pos).reshape(k, d).copy()
            pos += 8 * k * d
            usage = np.frombuffer(data, dtype="<f8", count=k, offset=pos).copy()
            pos += 8 * k
            codebooks.append(vq.Codebook(vectors, usage, decay, threshold))
        (nusage,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        usage_map: dict[tuple[int, int, int], int] = {}
        for _ in range(nusage):
            r, g, b, count = struct.unpack_from("<HHHQ", data, pos)
            pos += struct.calcsize("<HHHQ")
            usage_map[(r, g, b)] = count
        return cls(params, ema_params, codebooks, usage_map, config, header["step"], header["seed"])


# -----------------------------
# training
# -----------------------------

def _cosine_lr(cfg: ModelConfig, step: int) -> float:
    if cfg.steps <= 1:
        return cfg.lr_initial
    frac = step / (cfg.steps - 1)
    return cfg.lr_final + 0.5 * (cfg.lr_initial - cfg.lr_final) * (1.0 + math.cos(math.pi * frac))


def _resolve_seed(rng: Union[int, np.random.Generator]) -> int:
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    return int(rng.integers(0, 2**63 - 1))


def _draw_batch(flist: WordFrequencyList, rng: np.random.Generator, size: int) -> list[tuple[BoundedWord, float]]:
    examples: list[tuple[BoundedWord, float]] = []
    while len(examples) < size:
        drawn = corpus_mod.draw_training_example(flist, rng)
        if isinstance(drawn, BoundedWord):
            weight = loss_weight(flist[drawn.content])
            examples.append((drawn, weight))
        else:
            left, right = drawn
            weight = loss_weight(flist[left.content + right.content])
            examples.append((left, weight))
            if len(examples) < size:
                examples.append((right, weight))
    return examples[:size]


def train(
    flist: WordFrequencyList,
    config: ModelConfig,
    rng: Union[int, np.random.Generator] = 0,
    initial: Checkpoint | None = None,
    stop_step: int | None = None,
) -> Checkpoint:
    """Run the training loop and return the checkpoint at the final step.

    Per-step randomness is derived from (seed, step) and the lr schedule from
    config.steps alone, so a run stopped early (`stop_step`) and resumed
    (`initial`) reproduces the uninterrupted run bit for bit.
    """
    seed = initial.seed if initial is not None else _resolve_seed(rng)
    kept = {w: c for w, c in flist.items() if len(w) + 2 <= config.max_word_length}
    dropped = len(flist) - len(kept)
    if dropped:
        logger.warning("dropping %d words longer than %d symbols from training", dropped, config.max_word_length)
    if not kept:
        raise ValueError("no trainable words: all entries exceed the length limit")
    flist = WordFrequencyList(kept)

    if initial is not None:
        ckpt = initial
        params, ema, codebooks = ckpt.params, ckpt.ema_params, ckpt.codebooks
        usage = dict(ckpt.usage)
        start_step = ckpt.step
    else:
        init_rng = np.random.default_rng((seed, 0, 0))
        params = init_parameters(config, init_rng)
        ema = {name: value.copy() for name, value in params.items()}
        codebooks = [
            vq.Codebook.initialize(
                config.codebook_size,
                config.latent_dim,
                init_rng,
                decay=config.codebook_decay,
                reset_threshold=config.reset_threshold,
            )
            for _ in range(3)
        ]
        usage = {}
        start_step = 0

    # trust-region state: plain SGD can hit the edge of stability once the
    # model sharpens into a narrow minimum. The loss is anchored against the
    # best running average seen after the commitment warmup; a spike above it
    # restores the last healthy snapshot and halves a recovering lr scale.
    loss_average = None
    best_average = math.inf
    lr_scale = 1.0
    snapshot = None

    def take_snapshot():
        return (
            {k: v.copy() for k, v in params.items()},
            {k: v.copy() for k, v in ema.items()},
            [book.copy() for book in codebooks],
        )

    end_step = config.steps if stop_step is None else min(stop_step, config.steps)
    for step in range(start_step, end_step):
        step_rng = np.random.default_rng((seed, 1, step))
        batch = make_batch(_draw_batch(flist, step_rng, config.batch_size), config)
        warmed_up = step >= config.beta_warmup_steps
        beta = config.beta * (min(1.0, step / config.beta_warmup_steps) if config.beta_warmup_steps else 1.0)
        loss, grads, aux = model_loss_and_grads(params, codebooks, batch, config, beta=beta)
        if not math.isfinite(loss):
            raise TrainingDivergedError(step, loss, {"weighted_nll": aux["weighted_nll"]})
        loss_average = loss if loss_average is None else 0.98 * loss_average + 0.02 * loss
        # divergence = the running average climbing well above the best seen;
        # single noisy batches cannot trigger it
        diverging = (
            config.loss_spike_factor > 0
            and warmed_up
            and snapshot is not None
            and loss_average > config.loss_spike_factor * best_average + 1.0
        )
        if diverging:
            params = {k: v.copy() for k, v in snapshot[0].items()}
            ema = {k: v.copy() for k, v in snapshot[1].items()}
            codebooks = [book.copy() for book in snapshot[2]]
            lr_scale = max(lr_scale * 0.5, 1.0 / 1024.0)
            loss_average = best_average  # re-anchor; one noisy batch must not re-trigger
            logger.info(
                "step %d: loss average %.4f climbed above best %.4f; restored snapshot, lr scale %.4g",
                step + 1, loss, best_average, lr_scale,
            )
        else:
            if warmed_up:
                best_average = min(best_average, loss_average)
                healthy = loss_average <= 1.5 * best_average + 0.5
                if healthy and (snapshot is None or step % 100 == 0):
                    snapshot = take_snapshot()
            lr_scale = min(1.0, lr_scale * 1.005)
            lr = _cosine_lr(config, step) * lr_scale
            if config.grad_clip > 0:
                norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
                if norm > config.grad_clip:
                    lr *= config.grad_clip / norm
            for name in params:
                params[name] -= lr * grads[name]
        resets = 0
        for c in range(3):
            vq.ema_update(codebooks[c], aux["latents"][:, c, :], aux["assignments"][:, c])
            _, result = vq.reset_dead_codes(codebooks[c], aux["latents"][:, c, :], step_rng)
            resets += len(result.applied)
        ema_parameters(params, ema, config.weight_ema_decay)
        triplets, counts = np.unique(aux["assignments"], axis=0, return_counts=True)
        for row, count in zip(triplets, counts):
            key = (int(row[0]), int(row[1]), int(row[2]))
            usage[key] = usage.get(key, 0) + int(count)
        if config.log_every and (step + 1) % config.log_every == 0:
            ckpt_view = Checkpoint(params, ema, codebooks, usage, config, step + 1, seed)
            entropies = ", ".join(f"{h:.2f}" for h in ckpt_view.channel_usage_entropy())
            logger.info("step %d: loss %.4f, usage entropy [%s], resets %d", step + 1, loss, entropies, resets)

    return Checkpoint(params, ema, codebooks, usage, config, end_step, seed)
