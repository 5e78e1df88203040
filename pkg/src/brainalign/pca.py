"""Response preprocessing: voxel z-scoring and PCA reduction.

Voxel responses are standardized per feature and reduced to a fixed number of
principal components before they serve as regression targets.  Statistics
(means, standard deviations, components) are always estimated on a training
split and reapplied to held-out splits unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ZScoreStats:
    """Per-feature standardization statistics estimated from a training split."""

    mean: np.ndarray  # [n_features]
    std: np.ndarray  # [n_features]

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.mean.shape[0]:
            raise ValueError(
                f"feature count {x.shape[-1]} does not match fitted {self.mean.shape[0]}"
            )
        return (x - self.mean) / self.std


def fit_zscore(x: np.ndarray) -> ZScoreStats:
    """Per-feature mean/std over rows; constant features get std 1 (centered only)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("z-scoring needs a 2-D array with at least 2 rows")
    mean = x.mean(axis=0)
    std = x.std(axis=0, ddof=0)
    std = np.where(std > 0, std, 1.0)
    return ZScoreStats(mean=mean, std=std)


@dataclass
class PCAModel:
    """Fitted principal components: ``project`` maps rows into component space."""

    mean: np.ndarray  # [n_features]
    components: np.ndarray  # [k, n_features], orthonormal rows
    explained_variance: np.ndarray  # [k], descending
    k: int

    def project(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.components.shape[1]:
            raise ValueError(
                f"input has {x.shape[-1]} features, model was fit on "
                f"{self.components.shape[1]}"
            )
        return (x - self.mean) @ self.components.T


def fit_pca(x: np.ndarray, k: int) -> PCAModel:
    """Fit a ``k``-component PCA via SVD of the centered data.

    Components are orthonormal rows ordered by descending explained variance
    (``ddof=1``).  Each component's sign is fixed so its largest-magnitude
    entry is positive.  Raises if the centered data has rank below ``k``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("PCA input must be 2-D [samples, features]")
    n, d = x.shape
    if n < 2:
        raise ValueError("PCA needs at least 2 samples")
    if not 1 <= k <= d:
        raise ValueError(f"k must be in [1, {d}], got {k}")

    mean = x.mean(axis=0)
    centered = x - mean
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    # Rank tolerance anchored to the original data scale: centering identical
    # rows leaves O(eps * |x|) residue whose own spectrum must not count.
    scale = max(float(s[0]) if s.size else 0.0, float(np.abs(x).max(initial=0.0)))
    tol = scale * max(n, d) * np.finfo(np.float64).eps
    rank = int((s > tol).sum())
    if rank < k:
        raise ValueError(
            f"centered data has rank {rank}, cannot extract k={k} components"
        )

    components = vt[:k]
    # Deterministic sign: largest-|entry| of each component made positive.
    for i in range(k):
        j = int(np.argmax(np.abs(components[i])))
        if components[i, j] < 0:
            components[i] = -components[i]
    explained = (s[:k] ** 2) / (n - 1)
    return PCAModel(mean=mean, components=components, explained_variance=explained, k=k)


@dataclass
class ResponsePipeline:
    """Z-score then PCA-project, with all statistics from one training split."""

    zscore: ZScoreStats | None
    pca: PCAModel

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.zscore is not None:
            x = self.zscore.apply(x)
        return self.pca.project(x)


def fit_response_pipeline(train: np.ndarray, k: int, standardize: bool = True) -> ResponsePipeline:
    """Fit the z-score + PCA pipeline on a training response matrix."""
    train = np.asarray(train, dtype=np.float64)
    stats = fit_zscore(train) if standardize else None
    z = stats.apply(train) if stats is not None else train
    return ResponsePipeline(zscore=stats, pca=fit_pca(z, k))
