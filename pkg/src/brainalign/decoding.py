"""Pairwise EEG decoding: time-resolved stimulus discriminability RDMs.

Repeated EEG trials are grouped into averaged pseudo-trials, then every
stimulus pair is classified from channel patterns at each timepoint with a
cross-validated linear classifier.  The resulting accuracy matrix (chance 0.5
for indistinguishable stimuli, 1.0 for fully separable ones) serves as a
dissimilarity matrix per timepoint, except that the diagonal is fixed at 0
like every other RDM in this package.

Randomness is confined to two places, both seeded: the pseudo-trial grouping
(one permutation for the whole dataset) and the fold assignment, which draws
from a generator keyed by ``(seed, timepoint, i, j)`` so any single pair can
be recomputed in isolation and the full matrix is order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.discriminant_analysis import LinearDiscriminantAnalysis
from sklearn.svm import LinearSVC

from .data import EEGEpochs, pseudo_trial_average
from .rsa import RDM

CLASSIFIERS = ("linear_discriminant", "linear_svm")


@dataclass
class DecodingConfig:
    """Pseudo-trial and cross-validation settings for pairwise decoding."""

    k_pseudo_trials: int = 5
    n_folds: int = 5
    classifier: str = "linear_discriminant"
    seed: int = 0

    def __post_init__(self):
        if self.k_pseudo_trials < 2:
            raise ValueError(
                f"k_pseudo_trials must be >= 2, got {self.k_pseudo_trials}"
            )
        if not 2 <= self.n_folds <= self.k_pseudo_trials:
            raise ValueError(
                f"n_folds must be in [2, k_pseudo_trials={self.k_pseudo_trials}], "
                f"got {self.n_folds}"
            )
        if self.classifier not in CLASSIFIERS:
            raise ValueError(
                f"classifier must be one of {CLASSIFIERS}, got {self.classifier!r}"
            )


def _make_classifier(name: str):
    if name == "linear_discriminant":
        return LinearDiscriminantAnalysis(solver="lsqr", shrinkage="auto")
    return LinearSVC()


def pairwise_decoding_accuracy(
    a: np.ndarray,
    b: np.ndarray,
    n_folds: int,
    classifier: str,
    rng: np.random.Generator,
) -> float:
    """Cross-validated accuracy separating two stimuli's pseudo-trials.

    ``a`` and ``b`` are ``[k, n_features]`` pseudo-trial patterns.  The same
    shuffled fold assignment is applied to both classes, so every fold is
    balanced; with ``n_folds == k`` this is leave-one-pseudo-trial-per-class-
    out.  Returns the pooled fraction of correct held-out predictions.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(
            f"pseudo-trial blocks must share shape [k, features], got "
            f"{a.shape} and {b.shape}"
        )
    k = a.shape[0]
    folds = np.array_split(rng.permutation(k), n_folds)
    correct = 0
    total = 0
    for fold in folds:
        if fold.size == 0:
            continue
        train_mask = np.ones(k, dtype=bool)
        train_mask[fold] = False
        x_train = np.concatenate([a[train_mask], b[train_mask]])
        y_train = np.concatenate(
            [np.zeros(train_mask.sum()), np.ones(train_mask.sum())]
        )
        x_test = np.concatenate([a[fold], b[fold]])
        y_test = np.concatenate([np.zeros(fold.size), np.ones(fold.size)])
        model = _make_classifier(classifier)
        model.fit(x_train, y_train)
        correct += int((model.predict(x_test) == y_test).sum())
        total += y_test.size
    return correct / total


def build_eeg_rdms(epochs: EEGEpochs, config: DecodingConfig) -> list[RDM]:
    """One decoding-accuracy RDM per timepoint for a subject's epochs."""
    n_stim, n_reps = epochs.data.shape[:2]
    if n_stim < 2:
        raise ValueError(f"pairwise decoding needs >= 2 stimuli, got {n_stim}")
    if n_reps < config.k_pseudo_trials:
        raise ValueError(
            f"{n_reps} repetitions cannot form {config.k_pseudo_trials} pseudo-trials"
        )
    pseudo = pseudo_trial_average(
        epochs.data, config.k_pseudo_trials, seed=config.seed
    )  # [S, k, C, T]
    n_t = pseudo.shape[3]
    ids = list(epochs.stimulus_ids) or [f"stim{i:03d}" for i in range(n_stim)]
    rdms = []
    for t in range(n_t):
        matrix = np.zeros((n_stim, n_stim))
        for i in range(n_stim):
            for j in range(i + 1, n_stim):
                rng = np.random.default_rng([config.seed, t, i, j])
                acc = pairwise_decoding_accuracy(
                    pseudo[i, :, :, t],
                    pseudo[j, :, :, t],
                    n_folds=config.n_folds,
                    classifier=config.classifier,
                    rng=rng,
                )
                matrix[i, j] = acc
                matrix[j, i] = acc
        rdms.append(RDM(matrix, ids, "decoding_accuracy"))
    return rdms


def epoch_timepoints_ms(epochs: EEGEpochs) -> np.ndarray:
    """Timepoint latencies in milliseconds from the epoch window and rate."""
    n_t = epochs.data.shape[3]
    step = 1000.0 / epochs.sample_rate_hz
    return epochs.window_ms[0] + step * np.arange(n_t)
