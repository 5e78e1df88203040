"""Representational similarity: RDM construction and model-brain comparison.

A representational dissimilarity matrix (RDM) is a symmetric, zero-diagonal
stimulus-by-stimulus matrix.  Three constructions appear in this package:
``1 - Pearson`` over response patterns (here), pairwise decoding accuracy
(:mod:`brainalign.decoding`), and absolute feature differences
(:mod:`brainalign.dimensions`).  RDMs are compared by Spearman correlation of
their strictly upper triangles; model-brain similarity for an ROI is the best
such correlation over the four backbone stages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .backbone import STAGE_NAMES, Backbone
from .losses import correlation
from .training import extract_stage_features

RDM_METHODS = ("one_minus_pearson", "decoding_accuracy", "abs_feature_diff")

SYMMETRY_TOL = 1e-6


@dataclass
class RDM:
    """Stimulus dissimilarity matrix with its construction method."""

    values: np.ndarray  # [n_stimuli, n_stimuli]
    stimulus_ids: list[str]
    method: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.validate()

    def validate(self):
        v = self.values
        n = len(self.stimulus_ids)
        if v.ndim != 2 or v.shape != (n, n):
            raise ValueError(
                f"RDM must be square over {n} stimuli, got shape {v.shape}"
            )
        if self.method not in RDM_METHODS:
            raise ValueError(f"unknown RDM method {self.method!r}")
        if v.size == 0:
            return
        if not np.isfinite(v).all():
            raise ValueError("RDM contains non-finite values")
        if np.abs(v - v.T).max() > SYMMETRY_TOL:
            raise ValueError(
                f"RDM asymmetry {np.abs(v - v.T).max():.3g} exceeds {SYMMETRY_TOL}"
            )
        if np.any(np.diag(v) != 0.0):
            raise ValueError("RDM diagonal must be exactly zero")

    def upper_triangle(self) -> np.ndarray:
        """Strictly upper triangular entries, row-major."""
        iu = np.triu_indices(self.values.shape[0], k=1)
        return self.values[iu]


def _finalize(matrix: np.ndarray) -> np.ndarray:
    matrix = (matrix + matrix.T) / 2.0
    np.fill_diagonal(matrix, 0.0)
    return matrix


def one_minus_pearson_rdm(responses: np.ndarray, stimulus_ids: list[str]) -> RDM:
    """``1 - Pearson`` dissimilarity between response rows."""
    responses = np.asarray(responses, dtype=np.float64)
    if responses.ndim != 2 or responses.shape[0] != len(stimulus_ids):
        raise ValueError(
            f"responses must be [n_stimuli, n_features] with "
            f"{len(stimulus_ids)} rows, got {responses.shape}"
        )
    centered = responses - responses.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(centered, axis=1)
    flat = np.flatnonzero(norms == 0.0)
    if flat.size:
        raise ValueError(
            f"zero-variance response for stimulus {stimulus_ids[flat[0]]!r}"
        )
    corr = (centered / norms[:, None]) @ (centered / norms[:, None]).T
    return RDM(_finalize(1.0 - corr), list(stimulus_ids), "one_minus_pearson")


def layer_rdms(
    backbone: Backbone, images: np.ndarray, stimulus_ids: list[str]
) -> dict[str, RDM]:
    """One ``1 - Pearson`` RDM per backbone stage from flattened activations."""
    feats = extract_stage_features(backbone, images)
    return {
        name: one_minus_pearson_rdm(feats[name], stimulus_ids) for name in STAGE_NAMES
    }


def compare_rdms(a: RDM, b: RDM) -> float:
    """Spearman correlation between the strictly upper triangles of two RDMs."""
    if a.stimulus_ids != b.stimulus_ids:
        raise ValueError("RDMs are over different stimuli or different orderings")
    return correlation(a.upper_triangle(), b.upper_triangle(), method="spearman")


@dataclass
class RoiSimilarity:
    """Model-brain similarity for one ROI: per-stage values and the best stage."""

    per_stage: dict[str, float]
    best_stage: str
    best_value: float


def roi_similarity(model_rdms: dict[str, RDM], brain_rdm: RDM) -> RoiSimilarity:
    """Best Spearman RDM correlation over stages; ties keep the earlier stage."""
    missing = [s for s in STAGE_NAMES if s not in model_rdms]
    if missing:
        raise ValueError(f"model RDMs missing stages {missing}")
    per_stage = {s: compare_rdms(model_rdms[s], brain_rdm) for s in STAGE_NAMES}
    best_stage = STAGE_NAMES[int(np.argmax([per_stage[s] for s in STAGE_NAMES]))]
    return RoiSimilarity(
        per_stage=per_stage, best_stage=best_stage, best_value=per_stage[best_stage]
    )


def improvement_ratio(aligned: float, baseline: float) -> float | None:
    """Relative improvement ``(aligned - baseline) / baseline``; None at zero baseline."""
    if baseline == 0.0:
        return None
    return (aligned - baseline) / baseline


@dataclass
class TemporalSimilarity:
    """Spearman RDM correlation per stage, timepoint, and subject."""

    stages: tuple[str, ...]
    values: np.ndarray  # [n_stages, n_timepoints, n_subjects]
    timepoints_ms: np.ndarray | None = None


def temporal_similarity(
    model_rdms: dict[str, RDM],
    subject_time_rdms: list[list[RDM]],
    timepoints_ms: np.ndarray | None = None,
) -> TemporalSimilarity:
    """Correlate stage RDMs against per-subject, per-timepoint brain RDMs.

    ``subject_time_rdms[s][t]`` is subject ``s``'s RDM at timepoint ``t``; all
    subjects must supply the same number of timepoints.
    """
    missing = [s for s in STAGE_NAMES if s not in model_rdms]
    if missing:
        raise ValueError(f"model RDMs missing stages {missing}")
    if not subject_time_rdms:
        raise ValueError("need at least one subject")
    n_t = len(subject_time_rdms[0])
    if any(len(rdms) != n_t for rdms in subject_time_rdms):
        raise ValueError("subjects have differing numbers of timepoints")
    values = np.zeros((len(STAGE_NAMES), n_t, len(subject_time_rdms)))
    for si, stage in enumerate(STAGE_NAMES):
        for subj, rdms in enumerate(subject_time_rdms):
            for t, rdm in enumerate(rdms):
                values[si, t, subj] = compare_rdms(model_rdms[stage], rdm)
    if timepoints_ms is not None:
        timepoints_ms = np.asarray(timepoints_ms, dtype=np.float64)
        if timepoints_ms.shape != (n_t,):
            raise ValueError(
                f"timepoints_ms must have length {n_t}, got {timepoints_ms.shape}"
            )
    return TemporalSimilarity(
        stages=tuple(STAGE_NAMES), values=values, timepoints_ms=timepoints_ms
    )


@dataclass
class TemporalContrast:
    """Paired comparison of two temporal similarity profiles across subjects."""

    stages: tuple[str, ...]
    mean_difference: np.ndarray  # [n_stages, n_timepoints]
    t_values: np.ndarray
    p_values: np.ndarray
    significant: np.ndarray  # bool, same shape
    alpha: float
    cluster_corrected: bool = False
    note: str | None = None


def _paired_t(diffs: np.ndarray) -> tuple[float, float]:
    """Two-sided paired t-test on a vector of per-subject differences."""
    n = diffs.shape[0]
    mean = float(diffs.mean())
    sd = float(diffs.std(ddof=1))
    if sd == 0.0:
        # Identical profiles give p=1; a constant nonzero shift is maximally
        # reliable across subjects.
        return (0.0, 1.0) if mean == 0.0 else (np.inf if mean > 0 else -np.inf, 0.0)
    t = mean / (sd / np.sqrt(n))
    p = 2.0 * stats.t.sf(abs(t), df=n - 1)
    return t, float(p)


def _cluster_masses(t_row: np.ndarray, t_crit: float) -> list[tuple[int, int, float]]:
    """Contiguous runs where |t| exceeds the threshold, with their mass."""
    clusters = []
    above = np.abs(t_row) > t_crit
    start = None
    for i, flag in enumerate(above):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            clusters.append((start, i, float(np.abs(t_row[start:i]).sum())))
            start = None
    if start is not None:
        clusters.append((start, len(above), float(np.abs(t_row[start:]).sum())))
    return clusters


def temporal_contrast(
    a: TemporalSimilarity,
    b: TemporalSimilarity,
    alpha: float = 0.05,
    n_permutations: int = 0,
    seed: int = 0,
) -> TemporalContrast:
    """Paired two-sided t-test of ``a`` minus ``b`` at each stage and timepoint.

    With fewer than 3 subjects the curves are still returned but nothing is
    flagged significant.  ``n_permutations > 0`` switches to cluster-mass
    correction: clusters of suprathreshold timepoints are kept when their
    summed |t| beats the permutation null built from per-subject sign flips.
    """
    if a.stages != b.stages:
        raise ValueError("temporal profiles cover different stages")
    if a.values.shape != b.values.shape:
        raise ValueError(
            f"temporal profiles have different shapes: {a.values.shape} vs "
            f"{b.values.shape}"
        )
    n_stages, n_t, n_subj = a.values.shape
    diffs = a.values - b.values  # [stages, T, subjects]
    mean_diff = diffs.mean(axis=2)
    t_vals = np.zeros((n_stages, n_t))
    p_vals = np.ones((n_stages, n_t))
    for s in range(n_stages):
        for t in range(n_t):
            t_vals[s, t], p_vals[s, t] = _paired_t(diffs[s, t])

    if n_subj < 3:
        return TemporalContrast(
            stages=a.stages,
            mean_difference=mean_diff,
            t_values=t_vals,
            p_values=p_vals,
            significant=np.zeros((n_stages, n_t), dtype=bool),
            alpha=alpha,
            note=f"significance disabled: only {n_subj} subject(s)",
        )

    if n_permutations <= 0:
        return TemporalContrast(
            stages=a.stages,
            mean_difference=mean_diff,
            t_values=t_vals,
            p_values=p_vals,
            significant=p_vals < alpha,
            alpha=alpha,
        )

    t_crit = float(stats.t.ppf(1.0 - alpha / 2.0, df=n_subj - 1))
    significant = np.zeros((n_stages, n_t), dtype=bool)
    rng = np.random.default_rng(seed)
    with np.errstate(divide="ignore", invalid="ignore"):
        for s in range(n_stages):
            observed = _cluster_masses(t_vals[s], t_crit)
            if not observed:
                continue
            null_max = np.zeros(n_permutations)
            for perm in range(n_permutations):
                signs = rng.choice([-1.0, 1.0], size=n_subj)
                flipped = diffs[s] * signs[None, :]
                mean = flipped.mean(axis=1)
                sd = flipped.std(axis=1, ddof=1)
                t_row = np.where(
                    sd == 0.0,
                    np.where(mean == 0.0, 0.0, np.inf),
                    mean / (sd / np.sqrt(n_subj)),
                )
                perm_clusters = _cluster_masses(t_row, t_crit)
                null_max[perm] = max((m for _, _, m in perm_clusters), default=0.0)
            for start, end, mass in observed:
                p_cluster = (1.0 + float((null_max >= mass).sum())) / (1.0 + n_permutations)
                if p_cluster <= alpha:
                    significant[s, start:end] = True
    return TemporalContrast(
        stages=a.stages,
        mean_difference=mean_diff,
        t_values=t_vals,
        p_values=p_vals,
        significant=significant,
        alpha=alpha,
        cluster_corrected=True,
    )
