"""Alignment training: self-teacher labels, Adam updates, checkpoints.

Training starts from an initial backbone.  A frozen copy of that backbone
acts as the teacher: its argmax predictions over the training images are the
classification targets throughout, so the student is pulled toward measured
neural responses while being anchored to its own initial task behavior.
The student backbone and a freshly initialized response head are updated
jointly with Adam on the combined objective from :mod:`brainalign.losses`.

Everything is deterministic given the config seed: shuffles come from a
dedicated numpy generator, torch runs single-threaded during training, and
artifacts (per-step JSONL log, checkpoints) contain no timestamps, so two
runs with the same inputs produce byte-identical output trees.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .arrayio import atomic_write_json, atomic_write_text, read_array_bundle, write_array_bundle
from .backbone import Backbone, BackboneSpec, build_backbone
from .encoder_head import STAGE_EMBED_DIM, ResponseHead, build_response_head
from .losses import RANK_MODES, alignment_loss

_EVAL_BATCH = 64


@dataclass
class AlignmentConfig:
    """Hyperparameters for one alignment run."""

    beta: float = 40.0
    learning_rate: float = 2e-5
    epochs: int = 5
    batch_size: int = 16
    seed: int = 0
    rank_mode: str = "pearson"
    rank_temperature: float = 0.1
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    update_bn_stats: bool = True
    train_all_stages: bool = True

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise ValueError(
                f"batch_size must be >= 2 (the contrastive term needs mismatched "
                f"pairs), got {self.batch_size}"
            )
        if self.rank_mode not in RANK_MODES:
            raise ValueError(f"rank_mode must be one of {RANK_MODES}, got {self.rank_mode!r}")
        self.adam_betas = tuple(self.adam_betas)


@dataclass
class TrainingResult:
    """Trained modules plus the full step log for one run."""

    backbone: Backbone
    head: ResponseHead
    config: AlignmentConfig
    log: list[dict]
    teacher_labels: np.ndarray
    best_epoch: int
    checkpoint_dir: Path | None = None


def _to_tensor(images: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(images, dtype=np.float32))


def compute_teacher_labels(teacher: Backbone, images: np.ndarray) -> np.ndarray:
    """Argmax class predictions of a frozen model, computed without gradients."""
    teacher.eval()
    labels = []
    with torch.no_grad():
        for start in range(0, images.shape[0], _EVAL_BATCH):
            batch = _to_tensor(images[start:start + _EVAL_BATCH])
            labels.append(teacher(batch).argmax(dim=1).numpy())
    return (
        np.concatenate(labels).astype(np.int64)
        if labels
        else np.zeros(0, dtype=np.int64)
    )


def generate_responses(
    backbone: Backbone, head: ResponseHead, images: np.ndarray, batch_size: int = _EVAL_BATCH
) -> np.ndarray:
    """Head outputs for a stack of images, in eval mode without gradients."""
    backbone.eval()
    head.eval()
    out = []
    with torch.no_grad():
        for start in range(0, images.shape[0], batch_size):
            feats = backbone.stage_features(_to_tensor(images[start:start + batch_size]))
            out.append(head(feats).numpy())
    return np.concatenate(out) if out else np.zeros((0, head.target_dim), dtype=np.float32)


def extract_stage_features(
    backbone: Backbone, images: np.ndarray, batch_size: int = _EVAL_BATCH
) -> dict[str, np.ndarray]:
    """Flattened per-stage activations [n_images, flat_dim] for each stage."""
    backbone.eval()
    chunks: dict[str, list[np.ndarray]] = {}
    with torch.no_grad():
        for start in range(0, images.shape[0], batch_size):
            feats = backbone.stage_features(_to_tensor(images[start:start + batch_size]))
            for name, tensor in feats.items():
                chunks.setdefault(name, []).append(
                    tensor.reshape(tensor.shape[0], -1).numpy()
                )
    return {name: np.concatenate(parts) for name, parts in chunks.items()}


def _combined_state(backbone: Backbone, head: ResponseHead) -> dict[str, np.ndarray]:
    state = {}
    for prefix, module in (("backbone", backbone), ("head", head)):
        for name, tensor in module.state_dict().items():
            state[f"{prefix}.{name}"] = tensor.detach().cpu().numpy()
    return state


def save_checkpoint(
    directory: str | Path,
    backbone: Backbone,
    head: ResponseHead,
    config: AlignmentConfig,
) -> Path:
    """Write config and all parameters/buffers of both modules to a directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "alignment": asdict(config),
        "backbone_spec": asdict(backbone.spec),
        "head": {"target_dim": head.target_dim, "embed_dim": head.embed_dim},
    }
    atomic_write_json(directory / "config.json", meta)
    write_array_bundle(directory / "params", _combined_state(backbone, head))
    return directory


def load_checkpoint(directory: str | Path) -> tuple[Backbone, ResponseHead, AlignmentConfig]:
    """Rebuild the backbone and head saved by :func:`save_checkpoint`."""
    directory = Path(directory)
    meta_path = directory / "config.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"checkpoint config not found: {meta_path}")
    meta = json.loads(meta_path.read_text())
    spec_dict = dict(meta["backbone_spec"])
    for key in ("channels", "recurrence", "norm_mean", "norm_std"):
        spec_dict[key] = tuple(spec_dict[key])
    spec = BackboneSpec(**spec_dict)
    backbone = build_backbone(spec, seed=0)
    head = build_response_head(
        spec, meta["head"]["target_dim"], seed=0, embed_dim=meta["head"]["embed_dim"]
    )
    arrays = read_array_bundle(directory / "params")
    for prefix, module in (("backbone", backbone), ("head", head)):
        expected = set(module.state_dict().keys())
        found = {
            name[len(prefix) + 1:] for name in arrays if name.startswith(prefix + ".")
        }
        if expected != found:
            raise ValueError(
                f"checkpoint {directory} is missing or has extra {prefix} entries: "
                f"{sorted(expected ^ found)}"
            )
        state = {
            key: torch.from_numpy(np.ascontiguousarray(arrays[f"{prefix}.{key}"]))
            for key in expected
        }
        module.load_state_dict(state)
    cfg = dict(meta["alignment"])
    cfg["adam_betas"] = tuple(cfg["adam_betas"])
    return backbone, head, AlignmentConfig(**cfg)


def _snapshot(module: torch.nn.Module) -> dict[str, torch.Tensor]:
    return {k: v.detach().clone() for k, v in module.state_dict().items()}


def _states_equal(a: dict[str, torch.Tensor], b: dict[str, torch.Tensor]) -> bool:
    return set(a) == set(b) and all(torch.equal(a[k], b[k]) for k in a)


def train(
    backbone_init: Backbone,
    images: np.ndarray,
    responses: np.ndarray,
    config: AlignmentConfig,
    out_dir: str | Path | None = None,
) -> TrainingResult:
    """Run one alignment training job.

    ``images`` is ``[N, 3, H, W]`` in [0, 1]; ``responses`` is the matching
    preprocessed response matrix ``[N, target_dim]``.  ``backbone_init`` is
    left untouched: the student and the teacher are both copies of it.  When
    ``out_dir`` is given, per-epoch checkpoints, a ``best`` checkpoint (lowest
    mean generation loss) and a ``final`` one are written there along with the
    step log.
    """
    if images.ndim != 4:
        raise ValueError(f"images must be [N, 3, H, W], got shape {images.shape}")
    if responses.ndim != 2 or responses.shape[0] != images.shape[0]:
        raise ValueError(
            f"responses must be [N, features] matching {images.shape[0]} images, "
            f"got {responses.shape}"
        )
    n = images.shape[0]
    if n < config.batch_size:
        raise ValueError(
            f"need at least batch_size={config.batch_size} samples, got {n}"
        )
    if not np.isfinite(responses).all():
        raise ValueError("responses contain non-finite values")

    torch.set_num_threads(1)

    teacher = copy.deepcopy(backbone_init)
    teacher.eval()
    for p in teacher.parameters():
        p.requires_grad_(False)
    teacher_state = _snapshot(teacher)
    teacher_labels = compute_teacher_labels(teacher, images)

    student = copy.deepcopy(backbone_init)
    head = build_response_head(
        backbone_init.spec, responses.shape[1], seed=config.seed
    )

    if config.train_all_stages:
        trainable = list(student.parameters()) + list(head.parameters())
    else:
        for p in student.parameters():
            p.requires_grad_(False)
        trainable = list(head.parameters())
    optimizer = torch.optim.Adam(
        trainable,
        lr=config.learning_rate,
        betas=config.adam_betas,
        eps=config.adam_eps,
    )

    responses32 = np.ascontiguousarray(responses, dtype=np.float32)
    labels_t = torch.from_numpy(teacher_labels)
    rng = np.random.default_rng(config.seed)
    log: list[dict] = []
    step = 0
    best_epoch = 0
    best_gen = float("inf")
    out_dir = Path(out_dir) if out_dir is not None else None

    for epoch in range(config.epochs):
        student.train()
        if not config.update_bn_stats:
            for m in student.modules():
                if isinstance(m, torch.nn.BatchNorm2d):
                    m.eval()
        head.train()

        perm = rng.permutation(n)
        epoch_gen = []
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            if idx.shape[0] < 2:
                # A trailing singleton has no mismatched pairs; drop it.
                continue
            batch_images = _to_tensor(images[idx])
            batch_resp = torch.from_numpy(responses32[idx])
            logits, feats = student.forward_with_features(batch_images)
            generated = head(feats)
            breakdown = alignment_loss(
                logits,
                labels_t[idx],
                generated,
                batch_resp,
                beta=config.beta,
                rank_mode=config.rank_mode,
                rank_temperature=config.rank_temperature,
            )
            optimizer.zero_grad()
            breakdown.total.backward()
            optimizer.step()
            entry = {"step": step, "epoch": epoch}
            entry.update(breakdown.as_floats())
            log.append(entry)
            epoch_gen.append(entry["generation"])
            step += 1

        mean_gen = float(np.mean(epoch_gen)) if epoch_gen else float("inf")
        if mean_gen < best_gen:
            best_gen = mean_gen
            best_epoch = epoch
        if out_dir is not None:
            save_checkpoint(out_dir / f"epoch_{epoch:03d}", student, head, config)

    if out_dir is not None:
        save_checkpoint(out_dir / "final", student, head, config)
        best_src = out_dir / f"epoch_{best_epoch:03d}"
        save_best = load_checkpoint(best_src)
        save_checkpoint(out_dir / "best", save_best[0], save_best[1], config)
        atomic_write_text(
            out_dir / "training_log.jsonl",
            "".join(json.dumps(e, sort_keys=True) + "\n" for e in log),
        )
        atomic_write_json(out_dir / "best_epoch.json", {"best_epoch": best_epoch})

    if not _states_equal(teacher_state, _snapshot(teacher)):
        raise RuntimeError("teacher parameters changed during training")

    student.eval()
    head.eval()
    return TrainingResult(
        backbone=student,
        head=head,
        config=config,
        log=log,
        teacher_labels=teacher_labels,
        best_epoch=best_epoch,
        checkpoint_dir=out_dir,
    )


def train_individual_suite(
    backbone_init: Backbone,
    datasets: dict[str, tuple[np.ndarray, np.ndarray]],
    config: AlignmentConfig,
    out_root: str | Path | None = None,
) -> dict[str, TrainingResult]:
    """Train one model per subject from a shared initial backbone.

    ``datasets`` maps subject id to ``(images, responses)``.  Every subject
    starts from a copy of the same ``backbone_init``; insertion order is
    preserved in the result.
    """
    results: dict[str, TrainingResult] = {}
    for subject, (images, responses) in datasets.items():
        sub_dir = Path(out_root) / subject if out_root is not None else None
        results[subject] = train(backbone_init, images, responses, config, out_dir=sub_dir)
    return results


@dataclass
class GradCheckReport:
    """Outcome of comparing autograd gradients against finite differences."""

    n_checked: int
    n_passed: int
    n_tensors: int
    n_tensors_covered: int
    failures: list[dict] = field(default_factory=list)

    @property
    def fraction_passed(self) -> float:
        return self.n_passed / self.n_checked if self.n_checked else 0.0


def check_gradients(
    backbone: Backbone,
    head: ResponseHead,
    images: np.ndarray,
    measured: np.ndarray,
    labels: np.ndarray,
    beta: float = 1.0,
    n_samples: int = 400,
    rel_tol: float = 1e-3,
    abs_floor: float = 1e-5,
    seed: int = 0,
    rank_mode: str = "pearson",
) -> GradCheckReport:
    """Central-difference check of every parameter tensor's gradients.

    The modules are copied to float64 and put in eval mode (fixed batch-norm
    statistics make the loss a deterministic function of the parameters).
    Sampled entries cover every trainable tensor at least once, with the rest
    allocated proportionally to tensor size.  An entry passes when autograd
    and finite difference agree within ``rel_tol`` relative, with an
    ``abs_floor`` absolute floor for near-zero gradients.
    """
    backbone = copy.deepcopy(backbone).double()
    head = copy.deepcopy(head).double()
    backbone.eval()
    head.eval()

    images_t = torch.from_numpy(np.ascontiguousarray(images, dtype=np.float64))
    measured_t = torch.from_numpy(np.ascontiguousarray(measured, dtype=np.float64))
    labels_t = torch.from_numpy(np.ascontiguousarray(labels, dtype=np.int64))

    def loss_value() -> torch.Tensor:
        logits, feats = backbone.forward_with_features(images_t)
        generated = head(feats)
        return alignment_loss(
            logits, labels_t, generated, measured_t, beta=beta, rank_mode=rank_mode
        ).total

    tensors = [
        (f"{prefix}.{name}", p)
        for prefix, module in (("backbone", backbone), ("head", head))
        for name, p in module.named_parameters()
        if p.requires_grad
    ]
    numels = np.array([p.numel() for _, p in tensors], dtype=np.float64)
    rng = np.random.default_rng(seed)
    counts = np.ones(len(tensors), dtype=np.int64)
    extra = max(0, n_samples - len(tensors))
    if extra:
        draws = rng.choice(len(tensors), size=extra, p=numels / numels.sum())
        counts += np.bincount(draws, minlength=len(tensors))
    counts = np.minimum(counts, numels.astype(np.int64))

    for _, p in tensors:
        p.grad = None
    loss = loss_value()
    loss.backward()

    n_checked = 0
    n_passed = 0
    failures: list[dict] = []
    with torch.no_grad():
        for (name, p), count in zip(tensors, counts):
            flat = p.data.view(-1)
            grad = p.grad.detach().view(-1)
            idx = rng.choice(p.numel(), size=int(count), replace=False)
            for i in idx:
                i = int(i)
                orig = flat[i].item()
                # Small enough that a whole-channel shift (a norm bias) rarely
                # pushes any unit across its activation kink; float64 keeps
                # the difference quotient's roundoff well under abs_floor.
                h = 1e-8 * max(1.0, abs(orig))
                flat[i] = orig + h
                plus = loss_value().item()
                flat[i] = orig - h
                minus = loss_value().item()
                flat[i] = orig
                fd = (plus - minus) / (2.0 * h)
                ag = grad[i].item()
                tol = max(abs_floor, rel_tol * max(abs(fd), abs(ag)))
                n_checked += 1
                if abs(fd - ag) <= tol:
                    n_passed += 1
                elif len(failures) < 20:
                    failures.append(
                        {"tensor": name, "index": i, "autograd": ag, "finite_diff": fd}
                    )

    return GradCheckReport(
        n_checked=n_checked,
        n_passed=n_passed,
        n_tensors=len(tensors),
        n_tensors_covered=int((counts > 0).sum()),
        failures=failures,
    )
