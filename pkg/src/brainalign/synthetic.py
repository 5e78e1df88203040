"""Synthetic desk-scale data: images, a ground-truth brain, and fixtures.

Everything here is seeded and cheap.  The centerpiece is the alignment
recovery problem: a frozen, differently initialized backbone plays the role
of a brain, its stage activations are projected through a fixed random linear
map into response space, and noise is added at a controlled signal-to-noise
ratio.  A trainee aligned to those responses should track the brain's
representational geometry better than an unaligned control.

The module also writes complete on-disk datasets (manifest plus arrays) in
the package's ingestion format, which the CLI and the test suite use as
end-to-end fixtures.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .arrayio import atomic_write_json, write_array
from .backbone import STAGE_NAMES, Backbone, BackboneSpec, build_backbone, tiny_spec
from .training import extract_stage_features


def make_images(n: int, size: int = 32, seed: int = 0, block: int = 4) -> np.ndarray:
    """Smoothed random block images, float32 ``[n, 3, size, size]`` in [0, 1]."""
    if size % block != 0:
        raise ValueError(f"block ({block}) must divide size ({size})")
    rng = np.random.default_rng(seed)
    low = rng.random((n, 3, size // block, size // block))
    images = np.kron(low, np.ones((1, 1, block, block)))
    images = ndimage.uniform_filter(images, size=(1, 1, 3, 3), mode="nearest")
    return np.clip(images, 0.0, 1.0).astype(np.float32)


def save_images_png(images: np.ndarray, directory: str | Path, prefix: str = "stim") -> list[Path]:
    """Write each image as an 8-bit PNG; returns the paths in order."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(images):
        arr = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
        path = directory / f"{prefix}{i:04d}.png"
        Image.fromarray(arr.transpose(1, 2, 0)).save(path)
        paths.append(path)
    return paths


@dataclass
class SyntheticBrain:
    """Frozen backbone plus a fixed linear readout into response space."""

    backbone: Backbone
    projection: np.ndarray  # [total_flat_features, target_dim]
    target_dim: int


def make_synthetic_brain(
    spec: BackboneSpec, target_dim: int, seed: int = 0
) -> SyntheticBrain:
    brain = build_backbone(spec, seed=seed)
    brain.eval()
    for p in brain.parameters():
        p.requires_grad_(False)
    total = sum(spec.stage_flat_dims)
    rng = np.random.default_rng(seed)
    projection = rng.normal(size=(total, target_dim)) / np.sqrt(total)
    return SyntheticBrain(backbone=brain, projection=projection, target_dim=target_dim)


def brain_responses(brain: SyntheticBrain, images: np.ndarray) -> np.ndarray:
    """Noise-free responses: concatenated stage features through the readout."""
    feats = extract_stage_features(brain.backbone, images)
    stacked = np.concatenate([feats[name] for name in STAGE_NAMES], axis=1)
    return stacked @ brain.projection


def standardize_and_add_noise(
    clean_train: np.ndarray,
    clean_test: np.ndarray,
    snr: float,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Standardize responses with training statistics, then add trial noise.

    Columns are centered and scaled by training-set statistics, making the
    signal standard deviation 1, so the additive Gaussian noise has standard
    deviation ``1 / snr`` (an snr of 5 gives a 5:1 signal-to-noise ratio).
    """
    if snr <= 0:
        raise ValueError(f"snr must be positive, got {snr}")
    mean = clean_train.mean(axis=0)
    std = clean_train.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    z_train = (clean_train - mean) / std
    z_test = (clean_test - mean) / std
    rng = np.random.default_rng(seed)
    noise_std = 1.0 / snr
    noisy_train = z_train + rng.normal(scale=noise_std, size=z_train.shape)
    noisy_test = z_test + rng.normal(scale=noise_std, size=z_test.shape)
    return noisy_train, noisy_test


@dataclass
class AlignmentProblem:
    """A complete synthetic recovery task: images, targets, and ground truth."""

    train_images: np.ndarray
    test_images: np.ndarray
    train_responses: np.ndarray  # standardized, noisy
    test_responses: np.ndarray
    brain: SyntheticBrain
    snr: float


def make_alignment_problem(
    n_train: int = 512,
    n_test: int = 64,
    target_dim: int = 64,
    snr: float = 5.0,
    seed: int = 0,
    spec: BackboneSpec | None = None,
) -> AlignmentProblem:
    """Build the synthetic brain-alignment recovery problem."""
    spec = spec if spec is not None else tiny_spec()
    images = make_images(n_train + n_test, size=spec.input_size, seed=seed)
    train_images, test_images = images[:n_train], images[n_train:]
    brain = make_synthetic_brain(spec, target_dim, seed=seed + 1000)
    clean_train = brain_responses(brain, train_images)
    clean_test = brain_responses(brain, test_images)
    train_resp, test_resp = standardize_and_add_noise(
        clean_train, clean_test, snr=snr, seed=seed + 2000
    )
    return AlignmentProblem(
        train_images=train_images,
        test_images=test_images,
        train_responses=train_resp,
        test_responses=test_resp,
        brain=brain,
        snr=snr,
    )


def planted_dimension_problem(
    n_stimuli: int = 24,
    n_dims: int = 8,
    n_features: int = 96,
    planted_index: int = 0,
    seed: int = 0,
    noise_scale: float = 0.05,
    orthogonal: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Features and responses where one dimension drives response geometry.

    Returns ``(feature_values [S, D], responses [S, F])``.  Response rows
    share a common component and move along a fixed direction proportionally
    to the planted dimension's value, so that dimension dominates the
    response RDM while the others are unrelated noise.  With
    ``orthogonal=True`` the feature columns are orthogonalized (requires
    ``n_stimuli >= n_dims``) and rescaled to roughly unit per-entry variance,
    so no dimension can borrow variance from another.
    """
    rng = np.random.default_rng(seed)
    features = rng.normal(size=(n_stimuli, n_dims))
    if orthogonal:
        if n_stimuli < n_dims:
            raise ValueError(
                f"{n_dims} orthogonal dimensions need >= {n_dims} stimuli, "
                f"got {n_stimuli}"
            )
        q, _ = np.linalg.qr(features)
        features = q * np.sqrt(n_stimuli)
    planted = features[:, planted_index]
    base = rng.normal(size=n_features)
    base /= np.linalg.norm(base)
    direction = rng.normal(size=n_features)
    direction -= (direction @ base) * base
    direction /= np.linalg.norm(direction)
    responses = (
        base[None, :]
        + np.outer(planted, direction)
        + noise_scale * rng.normal(size=(n_stimuli, n_features))
    )
    return features, responses


def make_eeg_epochs(
    n_stimuli: int,
    n_reps: int,
    n_channels: int = 17,
    n_timepoints: int = 20,
    separation: float = 0.0,
    seed: int = 0,
) -> np.ndarray:
    """Simulated epochs ``[S, R, C, T]``: per-stimulus patterns plus trial noise.

    ``separation=0`` yields pure noise (pairwise decoding at chance); large
    values give each stimulus a distinct, easily separable pattern.
    """
    rng = np.random.default_rng(seed)
    patterns = separation * rng.normal(size=(n_stimuli, 1, n_channels, n_timepoints))
    noise = rng.normal(size=(n_stimuli, n_reps, n_channels, n_timepoints))
    return (patterns + noise).astype(np.float32)


def write_fmri_dataset(
    root: str | Path,
    images: np.ndarray,
    subject_trials: dict[str, dict[str, np.ndarray]],
    repetition_counts: list[int],
    class_labels: list[int] | None = None,
    name: str = "synthetic-fmri",
) -> Path:
    """Write a complete fMRI dataset in the ingestion format; returns the manifest path.

    ``subject_trials[subject][roi]`` is a ``[sum(repetition_counts), n_voxels]``
    trial array with each stimulus's repetitions contiguous, in image order.
    """
    root = Path(root)
    n = images.shape[0]
    if len(repetition_counts) != n:
        raise ValueError(
            f"{len(repetition_counts)} repetition counts for {n} images"
        )
    paths = save_images_png(images, root / "images")
    stimuli = []
    for i in range(n):
        entry = {
            "stimulus_id": f"stim{i:04d}",
            "image_path": f"images/{paths[i].name}",
            "repetition_count": int(repetition_counts[i]),
        }
        if class_labels is not None:
            entry["class_label"] = int(class_labels[i])
        stimuli.append(entry)
    subjects = []
    total = int(sum(repetition_counts))
    for sub, rois in subject_trials.items():
        roi_map = {}
        for roi, trials in rois.items():
            if trials.shape[0] != total:
                raise ValueError(
                    f"{sub}/{roi}: has {trials.shape[0]} trials, repetition "
                    f"counts sum to {total}"
                )
            rel = f"arrays/{sub}_{roi}.f32"
            write_array(root / rel, np.asarray(trials, dtype=np.float32))
            roi_map[roi] = rel
        subjects.append({"id": sub, "rois": roi_map})
    manifest = {
        "name": name,
        "modality": "fmri",
        "subjects": subjects,
        "stimuli": stimuli,
    }
    return atomic_write_json(root / "manifest.json", manifest)


def write_eeg_dataset(
    root: str | Path,
    images: np.ndarray,
    subject_epochs: dict[str, np.ndarray],
    sample_rate_hz: float = 100.0,
    window_ms: tuple[float, float] = (0.0, 200.0),
    class_labels: list[int] | None = None,
    name: str = "synthetic-eeg",
) -> Path:
    """Write a complete EEG dataset; epochs are ``[S, R, C, T]`` per subject."""
    root = Path(root)
    n = images.shape[0]
    first = next(iter(subject_epochs.values()))
    n_reps, n_ch, n_t = first.shape[1], first.shape[2], first.shape[3]
    paths = save_images_png(images, root / "images")
    stimuli = []
    for i in range(n):
        entry = {
            "stimulus_id": f"stim{i:04d}",
            "image_path": f"images/{paths[i].name}",
            "repetition_count": n_reps,
        }
        if class_labels is not None:
            entry["class_label"] = int(class_labels[i])
        stimuli.append(entry)
    subjects = []
    for sub, epochs in subject_epochs.items():
        if epochs.shape != (n, n_reps, n_ch, n_t):
            raise ValueError(
                f"{sub}: epochs shape {epochs.shape} does not match "
                f"({n}, {n_reps}, {n_ch}, {n_t})"
            )
        rel = f"arrays/{sub}.f32"
        flat = np.asarray(epochs, dtype=np.float32).reshape(n * n_reps, n_ch, n_t)
        write_array(root / rel, flat)
        subjects.append(
            {
                "id": sub,
                "array": rel,
                "n_channels": n_ch,
                "n_timepoints": n_t,
                "sample_rate_hz": sample_rate_hz,
                "window_ms": list(window_ms),
            }
        )
    manifest = {
        "name": name,
        "modality": "eeg",
        "subjects": subjects,
        "stimuli": stimuli,
    }
    return atomic_write_json(root / "manifest.json", manifest)
