"""Dataset ingestion: manifests, stimulus sets, and neural response arrays.

A dataset is a single JSON manifest plus ``.f32``/sidecar array files
(:mod:`brainalign.arrayio`).  Responses are stored as raw repeated trials,
grouped by stimulus in manifest order:

* fMRI, per subject and ROI: ``[total_trials, n_voxels]`` where
  ``total_trials = sum(repetition_count)``.  Repetition counts may vary
  across stimuli; trials for one stimulus are contiguous.
* EEG, per subject: ``[total_trials, n_channels, n_timepoints]`` with a
  uniform repetition count (epochs are rectangular).

Loading averages fMRI repetitions into one response vector per stimulus and
keeps EEG repetitions intact for downstream pseudo-trial grouping.  All
operations are pure given the files on disk.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .arrayio import read_array


class IngestionError(Exception):
    """A referenced file is missing or unreadable."""


class ManifestValidationError(ValueError):
    """Manifest contents violate the schema or a declared shape."""


MODALITIES = ("fmri", "eeg")


@dataclass
class StimulusSet:
    """Ordered stimuli: identifiers, image paths, optional class labels."""

    stimulus_ids: list[str]
    image_paths: list[Path]
    class_labels: list[int | None]
    repetition_counts: list[int]

    def __len__(self) -> int:
        return len(self.stimulus_ids)


@dataclass
class NeuralResponseMatrix:
    """Trial-averaged responses for one subject and ROI, rows aligned to stimuli."""

    subject_id: str
    roi: str
    data: np.ndarray  # [n_stimuli, n_features]
    stimulus_ids: list[str]
    modality: str = "fmri"

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ManifestValidationError(
                f"response matrix for {self.subject_id}/{self.roi} must be 2-D, "
                f"got shape {self.data.shape}"
            )
        if self.data.shape[0] != len(self.stimulus_ids):
            raise ManifestValidationError(
                f"response matrix rows ({self.data.shape[0]}) != stimulus count "
                f"({len(self.stimulus_ids)}) for {self.subject_id}/{self.roi}"
            )
        if self.data.size and not np.isfinite(self.data).all():
            raise ManifestValidationError(
                f"non-finite values in responses for {self.subject_id}/{self.roi}"
            )


@dataclass
class EEGEpochs:
    """Repeated EEG trials for one subject: [n_stimuli, n_reps, channels, timepoints]."""

    subject_id: str
    data: np.ndarray
    sample_rate_hz: float
    window_ms: tuple[float, float]
    stimulus_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.data.ndim != 4:
            raise ManifestValidationError(
                f"EEG epochs for {self.subject_id} must be 4-D, got {self.data.shape}"
            )
        start, end = self.window_ms
        expected_t = (end - start) / 1000.0 * self.sample_rate_hz
        if abs(expected_t - self.data.shape[3]) > 0.5 + 1e-9:
            raise ManifestValidationError(
                f"window {self.window_ms} at {self.sample_rate_hz} Hz implies "
                f"{expected_t:.2f} timepoints, array has {self.data.shape[3]}"
            )


def _require(condition: bool, message: str):
    if not condition:
        raise ManifestValidationError(message)


def parse_manifest(manifest_path: str | Path) -> dict:
    """Parse and structurally validate a dataset manifest."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise IngestionError(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestValidationError(f"manifest {manifest_path} is not valid JSON: {exc}")

    _require("modality" in manifest, "manifest missing field 'modality'")
    _require(
        manifest["modality"] in MODALITIES,
        f"field 'modality' must be one of {MODALITIES}, got {manifest['modality']!r}",
    )
    _require(isinstance(manifest.get("subjects"), list), "manifest missing list field 'subjects'")
    _require(isinstance(manifest.get("stimuli"), list), "manifest missing list field 'stimuli'")

    seen = set()
    for entry in manifest["stimuli"]:
        sid = entry.get("stimulus_id")
        _require(isinstance(sid, str) and sid, "stimulus entry missing 'stimulus_id'")
        _require(sid not in seen, f"duplicate stimulus_id {sid!r}")
        seen.add(sid)
        reps = entry.get("repetition_count")
        _require(
            isinstance(reps, int) and reps >= 1,
            f"stimulus {sid!r}: 'repetition_count' must be an integer >= 1, got {reps!r}",
        )
        _require("image_path" in entry, f"stimulus {sid!r} missing 'image_path'")
    return manifest


def _resolve(root: Path, rel: str) -> Path:
    p = Path(rel)
    return p if p.is_absolute() else root / p


def _load_trials(path: Path, name: str) -> np.ndarray:
    try:
        arr = read_array(path)
    except FileNotFoundError as exc:
        raise IngestionError(str(exc))
    if arr.size and not np.isfinite(arr).all():
        raise ManifestValidationError(f"non-finite values in array for {name}: {path}")
    return arr.astype(np.float32, copy=False)


def _split_by_stimulus(trials: np.ndarray, reps: list[int], name: str) -> list[np.ndarray]:
    total = sum(reps)
    _require(
        trials.shape[0] == total,
        f"{name}: array has {trials.shape[0]} trials, manifest declares {total}",
    )
    bounds = np.cumsum([0] + reps)
    return [trials[bounds[i]:bounds[i + 1]] for i in range(len(reps))]


def load_dataset(manifest_path: str | Path):
    """Load a dataset manifest and all referenced response arrays.

    Returns ``(StimulusSet, responses)`` where ``responses`` maps subject id to
    ``{roi: NeuralResponseMatrix}`` for fMRI manifests (repetitions averaged)
    or to :class:`EEGEpochs` for EEG manifests (repetitions kept).
    Stimulus ordering is identical across subjects by construction.
    """
    manifest_path = Path(manifest_path)
    manifest = parse_manifest(manifest_path)
    root = manifest_path.parent

    ids = [s["stimulus_id"] for s in manifest["stimuli"]]
    reps = [s["repetition_count"] for s in manifest["stimuli"]]
    image_paths = [_resolve(root, s["image_path"]) for s in manifest["stimuli"]]
    labels = [s.get("class_label") for s in manifest["stimuli"]]
    for sid, img in zip(ids, image_paths):
        if not img.exists():
            raise IngestionError(f"image for stimulus {sid!r} not found: {img}")
    stimuli = StimulusSet(ids, image_paths, labels, reps)

    responses: dict = {}
    if manifest["modality"] == "fmri":
        for subject in manifest["subjects"]:
            sub_id = subject["id"]
            rois = subject.get("rois")
            _require(
                isinstance(rois, dict) and rois,
                f"subject {sub_id!r}: 'rois' must map ROI names to array paths",
            )
            by_roi = {}
            for roi, rel in rois.items():
                name = f"{sub_id}/{roi}"
                trials = _load_trials(_resolve(root, rel), name)
                _require(trials.ndim == 2, f"{name}: fMRI array must be 2-D [trials, voxels]")
                groups = _split_by_stimulus(trials, reps, name)
                mean = (
                    np.stack([g.mean(axis=0) for g in groups])
                    if groups
                    else np.zeros((0, trials.shape[1]), dtype=np.float32)
                )
                by_roi[roi] = NeuralResponseMatrix(
                    subject_id=sub_id,
                    roi=roi,
                    data=mean.astype(np.float32),
                    stimulus_ids=list(ids),
                    modality="fmri",
                )
            responses[sub_id] = by_roi
    else:
        uniform = set(reps)
        _require(
            len(uniform) <= 1,
            f"EEG manifests require a uniform repetition_count, got {sorted(uniform)}",
        )
        n_reps = reps[0] if reps else 0
        for subject in manifest["subjects"]:
            sub_id = subject["id"]
            n_ch = subject.get("n_channels")
            n_t = subject.get("n_timepoints")
            _require(
                isinstance(n_ch, int) and isinstance(n_t, int),
                f"subject {sub_id!r}: EEG entries need integer 'n_channels' and 'n_timepoints'",
            )
            trials = _load_trials(_resolve(root, subject["array"]), sub_id)
            _require(
                trials.ndim == 3,
                f"{sub_id}: EEG array must be 3-D [trials, channels, timepoints]",
            )
            _require(
                trials.shape[1] == n_ch and trials.shape[2] == n_t,
                f"{sub_id}: array channels/timepoints {trials.shape[1:]} do not match "
                f"declared ({n_ch}, {n_t})",
            )
            groups = _split_by_stimulus(trials, reps, sub_id)
            data = (
                np.stack(groups)
                if groups
                else np.zeros((0, n_reps, n_ch, n_t), dtype=np.float32)
            )
            responses[sub_id] = EEGEpochs(
                subject_id=sub_id,
                data=data,
                sample_rate_hz=float(subject["sample_rate_hz"]),
                window_ms=tuple(subject["window_ms"]),
                stimulus_ids=list(ids),
            )
    return stimuli, responses


def load_images(stimuli: StimulusSet, size: tuple[int, int] | None = None) -> np.ndarray:
    """Load stimulus images as float32 ``[N, 3, H, W]`` in [0, 1].

    ``size=(H, W)`` resizes with bilinear resampling; otherwise all images must
    share one native size.
    """
    arrays = []
    for sid, path in zip(stimuli.stimulus_ids, stimuli.image_paths):
        try:
            with Image.open(path) as img:
                img = img.convert("RGB")
                if size is not None:
                    img = img.resize((size[1], size[0]), Image.BILINEAR)
                arr = np.asarray(img, dtype=np.float32) / 255.0
        except FileNotFoundError:
            raise IngestionError(f"image for stimulus {sid!r} not found: {path}")
        arrays.append(arr.transpose(2, 0, 1))
    if not arrays:
        h, w = size if size is not None else (0, 0)
        return np.zeros((0, 3, h, w), dtype=np.float32)
    shapes = {a.shape for a in arrays}
    if len(shapes) > 1:
        raise ManifestValidationError(
            f"images have mixed sizes {sorted(shapes)}; pass size=(H, W) to resize"
        )
    return np.stack(arrays)


def average_repetitions(trials: np.ndarray) -> np.ndarray:
    """Mean over the repetition axis of ``[n_stimuli, n_reps, ...]`` trials."""
    trials = np.asarray(trials)
    if trials.ndim < 2:
        raise ValueError("trials must have shape [n_stimuli, n_reps, ...]")
    if trials.shape[1] == 0:
        raise ValueError("no repetitions")
    return trials.mean(axis=1)


def pseudo_trial_average(trials: np.ndarray, k_groups: int, seed: int = 0) -> np.ndarray:
    """Group repetitions into ``k_groups`` averaged pseudo-trials.

    Repetition order is shuffled with ``seed`` (one permutation shared across
    stimuli), split into equal-size contiguous groups, and averaged; remainder
    repetitions beyond ``k_groups * (n_reps // k_groups)`` are dropped.
    """
    trials = np.asarray(trials)
    if trials.ndim < 2:
        raise ValueError("trials must have shape [n_stimuli, n_reps, ...]")
    n_reps = trials.shape[1]
    if k_groups < 2:
        raise ValueError(f"k_groups must be >= 2, got {k_groups}")
    if k_groups > n_reps:
        raise ValueError(f"k_groups ({k_groups}) exceeds n_reps ({n_reps})")
    group_size = n_reps // k_groups
    perm = np.random.default_rng(seed).permutation(n_reps)[: k_groups * group_size]
    shuffled = trials[:, perm]
    grouped = shuffled.reshape(
        trials.shape[0], k_groups, group_size, *trials.shape[2:]
    )
    return grouped.mean(axis=2)
