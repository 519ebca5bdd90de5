"""Shared oracles for the model tests and the acceptance suite."""

from __future__ import annotations

import math

import numpy as np

from vqtok import vq
from vqtok.autoencoder import ModelConfig, make_batch, model_loss_and_grads
from vqtok.corpus import BoundedWord
from vqtok.serialize import PAD


def tiny_model(seed: int = 7, **overrides):
    """A small random model plus a mixed batch for gradient probing."""
    from vqtok.autoencoder import init_parameters

    cfg = ModelConfig(
        codebook_size=overrides.pop("codebook_size", 6),
        latent_dim=overrides.pop("latent_dim", 5),
        hidden_dim=overrides.pop("hidden_dim", 16),
        emb_dim=overrides.pop("emb_dim", 6),
        context_width=overrides.pop("context_width", 4),
        log_every=0,
        **overrides,
    )
    rng = np.random.default_rng(seed)
    params = init_parameters(cfg, rng)
    books = [
        vq.Codebook.initialize(
            cfg.codebook_size, cfg.latent_dim, rng,
            decay=cfg.codebook_decay, reset_threshold=cfg.reset_threshold,
        )
        for _ in range(3)
    ]
    batch = make_batch(
        [
            (BoundedWord.full(b"cat"), 1.3),
            (BoundedWord(b"do", True, False), 0.8),
            (BoundedWord(b"ish", False, True), 2.1),
            (BoundedWord(b"x", False, False), 1.0),
        ],
        cfg,
    )
    return params, books, batch, cfg


def finite_difference_check(params, books, batch, cfg, mode, layer_names, probes_per_layer=10, step=1e-4):
    """Max relative error between analytic gradients and central differences.

    Probes prefer entries with a nonzero analytic gradient (embedding rows of
    symbols absent from the batch legitimately receive none).
    """
    _, grads, _ = model_loss_and_grads(params, books, batch, cfg, mode=mode)
    worst = 0.0
    for name in layer_names:
        flat = params[name].reshape(-1)
        gflat = grads[name].reshape(-1)
        rng = np.random.default_rng(abs(hash(name)) % 2**32)
        nonzero = np.flatnonzero(np.abs(gflat) > 1e-12)
        pool = nonzero if len(nonzero) >= probes_per_layer else np.arange(flat.size)
        indices = rng.choice(pool, size=min(probes_per_layer, len(pool)), replace=False)
        for i in indices:
            original = flat[i]
            flat[i] = original + step
            plus, _, _ = model_loss_and_grads(params, books, batch, cfg, mode=mode)
            flat[i] = original - step
            minus, _, _ = model_loss_and_grads(params, books, batch, cfg, mode=mode)
            flat[i] = original
            numeric = (plus - minus) / (2 * step)
            relative = abs(numeric - gflat[i]) / max(abs(numeric), abs(gflat[i]), 1e-6)
            worst = max(worst, relative)
    return worst


def stepwise_logprob_oracle(params, zvecs, word: BoundedWord, cfg: ModelConfig) -> float:
    """Independent teacher-forced log p(w|z): explicit per-step softmax with
    math.fsum accumulation."""
    from vqtok.autoencoder import target_symbols

    targets = target_symbols(word)
    zflat = [float(v) for row in np.asarray(zvecs) for v in row]
    history = [PAD] * cfg.context_width
    total = 0.0
    for target in targets:
        u = zflat + [float(v) for sym in history for v in params["dec_emb"][sym]]
        hidden = [
            math.tanh(math.fsum(w * x for w, x in zip(row, u)) + b)
            for row, b in zip(params["dec_w1"], params["dec_b1"])
        ]
        logits = [
            math.fsum(w * h for w, h in zip(row, hidden)) + b
            for row, b in zip(params["dec_w2"], params["dec_b2"])
        ]
        peak = max(logits)
        logz = peak + math.log(math.fsum(math.exp(v - peak) for v in logits))
        total += logits[target] - logz
        history = history[1:] + [target]
    return total
