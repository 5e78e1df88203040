"""Alignment objective: classification plus contrastive response generation.

The total loss is ``classification + beta * generation``.  Classification is
mean cross-entropy against teacher labels.  The generation term compares
generated responses against measured ones through a full batch correlation
matrix ``C[i, j] = corr(measured_i, generated_j)``:

* mse_term: mean squared error between matched pairs,
* positive_term: ``mean_i (1 - C[i, i])``, pulling matched pairs together,
* negative_term: ``mean_{i != j} (1 - C[i, j])`` over all ordered mismatched
  pairs, pushed apart by subtraction,

so ``generation = mse_term + positive_term - negative_term``.  A batch of N
stimuli yields N positive and N*(N-1) negative pairs; both counts are reported
from the computed masks so training logs expose them directly.

Rank-based correlation is not differentiable, so the training path offers two
surrogates: plain Pearson on raw responses (default) or Pearson on soft ranks.
The numpy :func:`correlation` here is the evaluation-side reference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from scipy.stats import rankdata

RANK_MODES = ("pearson", "soft")


def correlation(x: np.ndarray, y: np.ndarray, method: str = "pearson") -> float:
    """Correlation between two 1-D vectors; ``method`` is pearson or spearman.

    Spearman ranks with average ties and then applies Pearson.  Vectors
    shorter than 3 elements or with zero variance are degenerate and raise.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1:
        raise ValueError("correlation expects 1-D vectors")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] < 3:
        raise ValueError(f"degenerate vector: need at least 3 elements, got {x.shape[0]}")
    if method == "spearman":
        x = rankdata(x)
        y = rankdata(y)
    elif method != "pearson":
        raise ValueError(f"unknown correlation method {method!r}")
    xc = x - x.mean()
    yc = y - y.mean()
    nx = np.sqrt((xc * xc).sum())
    ny = np.sqrt((yc * yc).sum())
    if nx == 0.0 or ny == 0.0:
        raise ValueError("degenerate vector: zero variance")
    return float((xc * yc).sum() / (nx * ny))


def soft_rank(values: torch.Tensor, temperature: float = 0.1) -> torch.Tensor:
    """Differentiable per-row ranks of a 2-D tensor.

    ``rank_i = 1 + sum_{j != i} sigmoid((v_i - v_j) / tau)`` with ``tau``
    scaled by each row's standard deviation, so the result approaches hard
    ranks (1..D) as ``temperature`` shrinks.  Rows are processed one at a time
    to keep the pairwise difference matrix small.
    """
    if values.ndim != 2:
        raise ValueError(f"soft_rank expects [N, D], got shape {tuple(values.shape)}")
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    rows = []
    for row in values:
        std = row.std(unbiased=False).clamp_min(1e-12)
        diff = (row.unsqueeze(1) - row.unsqueeze(0)) / (temperature * std)
        # sigmoid(0) = 0.5 on the diagonal is removed to restrict the sum to j != i.
        rows.append(1.0 + torch.sigmoid(diff).sum(dim=1) - 0.5)
    return torch.stack(rows)


def _pearson_matrix(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """``C[i, j]`` = Pearson correlation of row i of ``a`` with row j of ``b``."""
    ac = a - a.mean(dim=1, keepdim=True)
    bc = b - b.mean(dim=1, keepdim=True)
    ac = ac / ac.norm(dim=1, keepdim=True).clamp_min(1e-12)
    bc = bc / bc.norm(dim=1, keepdim=True).clamp_min(1e-12)
    return ac @ bc.T


def classification_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean cross-entropy over the batch."""
    return F.cross_entropy(logits, labels)


def generation_loss(
    generated: torch.Tensor,
    measured: torch.Tensor,
    rank_mode: str = "pearson",
    rank_temperature: float = 0.1,
):
    """Contrastive generation loss and its components.

    Returns ``(total, mse_term, positive_term, negative_term, n_pos, n_neg)``
    where the terms are scalar tensors and the counts are the number of
    matched and ordered mismatched pairs actually entering the sums.
    """
    if generated.ndim != 2 or measured.ndim != 2:
        raise ValueError("responses must be 2-D [batch, features]")
    if generated.shape != measured.shape:
        raise ValueError(
            f"generated shape {tuple(generated.shape)} != measured "
            f"{tuple(measured.shape)}"
        )
    n = generated.shape[0]
    if n < 2:
        raise ValueError(f"batch must contain at least 2 stimuli, got {n}")
    if rank_mode not in RANK_MODES:
        raise ValueError(f"rank_mode must be one of {RANK_MODES}, got {rank_mode!r}")

    mse_term = F.mse_loss(generated, measured)

    if rank_mode == "soft":
        a = soft_rank(measured, rank_temperature)
        b = soft_rank(generated, rank_temperature)
    else:
        a, b = measured, generated
    corr = _pearson_matrix(a, b)

    eye = torch.eye(n, dtype=torch.bool, device=corr.device)
    n_pos = int(eye.sum().item())
    n_neg = int((~eye).sum().item())
    positive_term = (1.0 - corr[eye]).sum() / n_pos
    negative_term = (1.0 - corr[~eye]).sum() / n_neg
    total = mse_term + positive_term - negative_term
    return total, mse_term, positive_term, negative_term, n_pos, n_neg


@dataclass
class LossBreakdown:
    """All scalar terms of one alignment loss evaluation, plus pair counts."""

    total: torch.Tensor
    classification: torch.Tensor
    generation: torch.Tensor
    mse_term: torch.Tensor
    positive_term: torch.Tensor
    negative_term: torch.Tensor
    n_positive_pairs: int
    n_negative_pairs: int
    beta: float

    def as_floats(self) -> dict:
        out = {}
        for key in ("total", "classification", "generation", "mse_term",
                    "positive_term", "negative_term"):
            out[key] = float(getattr(self, key).detach())
        out["n_positive_pairs"] = self.n_positive_pairs
        out["n_negative_pairs"] = self.n_negative_pairs
        out["beta"] = self.beta
        return out


def alignment_loss(
    logits: torch.Tensor,
    labels: torch.Tensor,
    generated: torch.Tensor,
    measured: torch.Tensor,
    beta: float,
    rank_mode: str = "pearson",
    rank_temperature: float = 0.1,
) -> LossBreakdown:
    """Combined objective ``classification + beta * generation``."""
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    cls = classification_loss(logits, labels)
    gen, mse, pos, neg, n_pos, n_neg = generation_loss(
        generated, measured, rank_mode=rank_mode, rank_temperature=rank_temperature
    )
    return LossBreakdown(
        total=cls + beta * gen,
        classification=cls,
        generation=gen,
        mse_term=mse,
        positive_term=pos,
        negative_term=neg,
        n_positive_pairs=n_pos,
        n_negative_pairs=n_neg,
        beta=float(beta),
    )
