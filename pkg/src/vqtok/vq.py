"""Vector-quantization core: codebooks, nearest-neighbor lookup, EMA updates,
dead-code resets and the loss combination.

The codebook is updated without a codebook loss term: usage counts and
vectors follow exponential moving averages of the assigned encoder latents,
with counts refreshed first so the vector update divides by the new count.
Codes whose usage decays below a threshold are reseeded from a random batch
latent with their count reset to 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


@dataclass
class Codebook:
    """K learned vectors of dimension D with EMA usage counts."""

    vectors: np.ndarray  # (K, D) float64
    usage: np.ndarray  # (K,) float64, >= 0
    decay: float = 0.96
    reset_threshold: float = 0.1

    def __post_init__(self) -> None:
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self.usage = np.asarray(self.usage, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] < 2:
            raise ValueError("codebook needs at least 2 vectors")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("codebook vectors must be finite")
        if self.usage.shape != (self.vectors.shape[0],) or np.any(self.usage < 0):
            raise ValueError("usage counts must be non-negative, one per vector")
        if not 0.0 < self.decay < 1.0:
            raise ValueError("decay must lie in (0, 1)")

    @classmethod
    def initialize(cls, k: int, dim: int, rng: np.random.Generator, scale: float = 0.1, **kw) -> "Codebook":
        return cls(rng.normal(0.0, scale, size=(k, dim)), np.ones(k), **kw)

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def copy(self) -> "Codebook":
        return Codebook(self.vectors.copy(), self.usage.copy(), self.decay, self.reset_threshold)


class QuantizationResult(NamedTuple):
    index: int
    vector: np.ndarray
    distance: float


class ResetResult(NamedTuple):
    applied: list[int]
    deferred: list[int]


def quantize(latent: np.ndarray, codebook: Codebook) -> QuantizationResult:
    """Snap a latent to its nearest codebook vector (ties -> lowest index)."""
    latent = np.asarray(latent, dtype=np.float64)
    if latent.shape != (codebook.dim,):
        raise ValueError(f"latent has shape {latent.shape}, codebook dimension is {codebook.dim}")
    sq = np.sum((codebook.vectors - latent) ** 2, axis=1)
    index = int(np.argmin(sq))  # argmin returns the first minimum
    return QuantizationResult(index, codebook.vectors[index].copy(), float(np.sqrt(sq[index])))


def quantize_batch(latents: np.ndarray, codebook: Codebook) -> np.ndarray:
    """Nearest codebook index for each row of (B, D) latents."""
    latents = np.asarray(latents, dtype=np.float64)
    diff = latents[:, None, :] - codebook.vectors[None, :, :]
    return np.argmin(np.einsum("bkd,bkd->bk", diff, diff), axis=1)


def ema_update(codebook: Codebook, batch_latents: np.ndarray, batch_assignments: np.ndarray) -> Codebook:
    """EMA-refresh usage counts and vectors from one batch of assignments.

    Counts: c_k <- decay*c_k + (1-decay)*m_k with m_k the number of batch
    rows assigned to k. Vectors of assigned codes then move toward the sum
    of their latents divided by the refreshed count; unassigned vectors are
    left untouched.
    """
    latents = np.asarray(batch_latents, dtype=np.float64)
    assignments = np.asarray(batch_assignments, dtype=np.int64)
    if latents.shape[0] != assignments.shape[0]:
        raise ValueError("one assignment per latent required")
    if latents.shape[0] == 0:
        return codebook
    lam = codebook.decay
    counts = np.bincount(assignments, minlength=codebook.size).astype(np.float64)
    sums = np.zeros_like(codebook.vectors)
    np.add.at(sums, assignments, latents)
    codebook.usage = lam * codebook.usage + (1.0 - lam) * counts
    hit = counts > 0
    codebook.vectors[hit] = (
        lam * codebook.vectors[hit] + ((1.0 - lam) / codebook.usage[hit])[:, None] * sums[hit]
    )
    return codebook


def reset_dead_codes(
    codebook: Codebook, batch_latents: np.ndarray, rng: np.random.Generator
) -> tuple[Codebook, ResetResult]:
    """Reseed codes whose usage fell below the threshold from random latents.

    With an empty batch the reset is deferred: the dead indices are reported
    but nothing is modified.
    """
    dead = [int(k) for k in np.flatnonzero(codebook.usage < codebook.reset_threshold)]
    latents = np.asarray(batch_latents, dtype=np.float64)
    if not dead:
        return codebook, ResetResult([], [])
    if latents.shape[0] == 0:
        return codebook, ResetResult([], dead)
    for k in dead:
        codebook.vectors[k] = latents[int(rng.integers(0, latents.shape[0]))]
        codebook.usage[k] = 1.0
    return codebook, ResetResult(dead, [])


# -----------------------------
# losses
# -----------------------------

@dataclass
class VqLossTerms:
    """All three loss terms; `total` applies when the codebook loss is used."""

    reconstruction: float
    codebook: float
    commitment: float
    beta: float = 0.5

    def __post_init__(self) -> None:
        if self.codebook < 0 or self.commitment < 0:
            raise ValueError("codebook and commitment losses are norms, must be >= 0")

    @property
    def total(self) -> float:
        return self.reconstruction + self.codebook + self.beta * self.commitment


def combine_losses(reconstruction: float, commitment: float, beta: float) -> float:
    """Total loss in EMA mode: the codebook term is dropped."""
    if commitment < 0:
        raise ValueError("commitment loss must be >= 0")
    return reconstruction + beta * commitment


def commitment_loss(latent: np.ndarray, quantized: np.ndarray) -> float:
    """Squared distance pulling the latent toward its (stop-gradient) code."""
    diff = np.asarray(latent, dtype=np.float64) - np.asarray(quantized, dtype=np.float64)
    return float(np.sum(diff * diff))


def commitment_loss_backward(latent: np.ndarray, quantized: np.ndarray) -> np.ndarray:
    """Gradient of the commitment loss w.r.t. the latent: 2(e - z)."""
    return 2.0 * (np.asarray(latent, dtype=np.float64) - np.asarray(quantized, dtype=np.float64))


def codebook_loss(latent: np.ndarray, quantized: np.ndarray) -> float:
    """Squared distance pulling the code toward the (stop-gradient) latent.

    Unused when EMA updates are active; kept for the non-EMA training mode.
    """
    return commitment_loss(latent, quantized)


def codebook_loss_backward(latent: np.ndarray, quantized: np.ndarray) -> np.ndarray:
    """Gradient of the codebook loss w.r.t. the code vector: 2(z - e)."""
    return 2.0 * (np.asarray(quantized, dtype=np.float64) - np.asarray(latent, dtype=np.float64))


# -----------------------------
# straight-through estimator
# -----------------------------

def straight_through(latent: np.ndarray, quantized: np.ndarray) -> np.ndarray:
    """Forward pass of the straight-through estimator: the quantized value."""
    latent = np.asarray(latent, dtype=np.float64)
    quantized = np.asarray(quantized, dtype=np.float64)
    if latent.shape != quantized.shape:
        raise ValueError("latent and quantized shapes must match")
    return quantized.copy()


def straight_through_backward(grad_output: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Backward contract: the gradient passes to the latent unchanged and the
    quantized codebook vector receives none."""
    grad = np.asarray(grad_output, dtype=np.float64)
    return grad.copy(), np.zeros_like(grad)
