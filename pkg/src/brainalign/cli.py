"""Command-line interface: train, evaluate, analyze, and summarize runs.

Commands
--------
train      align one model per subject and beta value to fMRI responses
eval-fmri  model-brain RDM similarity on held-out stimulus families
eval-eeg   time-resolved similarity against EEG decoding RDMs
dims       unique-variance profile over interpretable object dimensions
report     aggregate the JSON reports under a directory into one summary

All commands read a single JSON config (validated against a schema, defaults
filled in) and write a ``resolved_config.json`` copy into their output
directory, so a run records exactly what produced it.  Outputs carry no
timestamps; rerunning a command on the same inputs reproduces the same bytes.

Exit codes: 0 success, 2 config or usage error, 3 data error, 4 runtime
failure.  An existing non-empty output directory is an error unless
``--overwrite`` is given, which switches to a numbered sibling directory
rather than deleting anything.  Partially written outputs are removed when a
command fails.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
from contextlib import contextmanager
from pathlib import Path

import jsonschema
import numpy as np
import torch

from .arrayio import ArrayFormatError, atomic_write_json, read_array
from .backbone import STAGE_NAMES, build_backbone, full_spec, tiny_spec
from .data import (
    IngestionError,
    ManifestValidationError,
    load_dataset,
    load_images,
)
from .decoding import DecodingConfig, build_eeg_rdms, epoch_timepoints_ms
from .dimensions import difference_profile, dimension_profile
from .figures import (
    save_difference_figure,
    save_dimension_figure,
    save_roi_similarity_figure,
    save_temporal_figure,
)
from .pca import fit_response_pipeline
from .rsa import (
    improvement_ratio,
    layer_rdms,
    one_minus_pearson_rdm,
    roi_similarity,
    temporal_contrast,
    temporal_similarity,
)
from .training import AlignmentConfig, load_checkpoint, train

DATA_ROOT_ENV = "BRAINALIGN_DATA_ROOT"
DEVICE_ENV = "BRAINALIGN_DEVICE"


class CliConfigError(Exception):
    """Invalid configuration or command usage."""


CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "data": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "train_manifest": {"type": "string"},
                "training_roi": {"type": "string"},
                "test_manifests": {
                    "type": "object",
                    "additionalProperties": {"type": "string"},
                },
                "eeg_manifest": {"type": "string"},
                "dims_manifest": {"type": "string"},
                "features_values": {"type": "string"},
                "features_names": {"type": "array", "items": {"type": "string"}},
            },
        },
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "variant": {"enum": ["tiny", "full"]},
                "init_seed": {"type": "integer"},
                "n_classes": {"type": "integer", "minimum": 2},
            },
        },
        "preprocess": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "pca_components": {"type": "integer", "minimum": 1},
                "standardize": {"type": "boolean"},
            },
        },
        "training": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "beta": {
                    "anyOf": [
                        {"type": "number"},
                        {"type": "array", "items": {"type": "number"}},
                    ]
                },
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "epochs": {"type": "integer", "minimum": 1},
                "batch_size": {"type": "integer", "minimum": 2},
                "seed": {"type": "integer"},
                "rank_mode": {"enum": ["pearson", "soft"]},
                "rank_temperature": {"type": "number", "exclusiveMinimum": 0},
                "update_bn_stats": {"type": "boolean"},
                "train_all_stages": {"type": "boolean"},
            },
        },
        "decoding": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "k_pseudo_trials": {"type": "integer", "minimum": 2},
                "n_folds": {"type": "integer", "minimum": 2},
                "classifier": {"enum": ["linear_discriminant", "linear_svm"]},
                "seed": {"type": "integer"},
            },
        },
        "evaluation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "cluster_permutations": {"type": "integer", "minimum": 0},
            },
        },
        "dims": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"stage": {"enum": list(STAGE_NAMES)}},
        },
    },
}

DEFAULTS = {
    "data": {},
    "model": {"variant": "tiny", "init_seed": 0, "n_classes": 10},
    "preprocess": {"pca_components": 32, "standardize": True},
    "training": {
        "beta": [0.0, 40.0],
        "learning_rate": 2e-5,
        "epochs": 5,
        "batch_size": 16,
        "seed": 0,
        "rank_mode": "pearson",
        "rank_temperature": 0.1,
        "update_bn_stats": True,
        "train_all_stages": True,
    },
    "decoding": {
        "k_pseudo_trials": 5,
        "n_folds": 5,
        "classifier": "linear_discriminant",
        "seed": 0,
    },
    "evaluation": {"alpha": 0.05, "cluster_permutations": 0},
    "dims": {"stage": "IT"},
}


def _check_device():
    device = os.environ.get(DEVICE_ENV, "cpu")
    if device != "cpu":
        raise CliConfigError(
            f"{DEVICE_ENV}={device!r} is not supported; only 'cpu' is available"
        )


def load_config(path: str | Path) -> tuple[dict, Path]:
    """Read, schema-validate, and default-fill a config file.

    Returns the resolved config and the root against which relative data
    paths are interpreted (``BRAINALIGN_DATA_ROOT`` or the config's parent).
    """
    path = Path(path)
    if not path.exists():
        raise CliConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CliConfigError(f"config {path} is not valid JSON: {exc}")
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        location = "/".join(str(p) for p in exc.absolute_path) or "(top level)"
        raise CliConfigError(f"config {path}: {exc.message} at {location}")
    resolved = {}
    for section, defaults in DEFAULTS.items():
        merged = dict(defaults)
        merged.update(raw.get(section, {}))
        resolved[section] = merged
    betas = resolved["training"]["beta"]
    if not isinstance(betas, list):
        betas = [betas]
    if not betas:
        raise CliConfigError("training.beta must list at least one value")
    resolved["training"]["beta"] = [float(b) for b in betas]
    env_root = os.environ.get(DATA_ROOT_ENV)
    data_root = Path(env_root) if env_root else path.parent
    return resolved, data_root


def _data_path(config: dict, data_root: Path, key: str) -> Path:
    value = config["data"].get(key)
    if value is None:
        raise CliConfigError(f"config is missing data.{key}")
    p = Path(value)
    return p if p.is_absolute() else data_root / p


def _model_spec(config: dict):
    model = config["model"]
    if model["variant"] == "full":
        return full_spec()
    return tiny_spec(n_classes=model["n_classes"])


def _beta_tag(beta: float) -> str:
    return f"{beta:g}"


def _select_betas(config: dict, override: float | None) -> list[float]:
    if override is not None:
        return [float(override)]
    return config["training"]["beta"]


@contextmanager
def _run_dir(path: str | Path, overwrite: bool):
    """Yield a fresh output directory; remove it again if the command fails."""
    target = Path(path)
    if target.exists() and any(target.iterdir()):
        if not overwrite:
            raise CliConfigError(
                f"output directory {target} is not empty (use --overwrite to "
                f"write to a numbered sibling)"
            )
        base = target
        counter = 2
        while target.exists() and any(target.iterdir()):
            target = base.with_name(f"{base.name}_{counter}")
            counter += 1
    target.mkdir(parents=True, exist_ok=True)
    try:
        yield target
    except BaseException:
        shutil.rmtree(target, ignore_errors=True)
        raise


def _write_resolved(out_dir: Path, config: dict, command: str, overrides: dict):
    payload = {"command": command, "config": config, "overrides": overrides}
    atomic_write_json(out_dir / "resolved_config.json", payload)


def _load_run_config(run: str | Path) -> dict:
    path = Path(run) / "resolved_config.json"
    if not path.exists():
        raise CliConfigError(
            f"{path} not found; --run must point at a train output directory"
        )
    return json.loads(path.read_text())["config"]


def _trained_subjects(run: Path, beta: float) -> list[str]:
    beta_dir = run / "models" / f"beta_{_beta_tag(beta)}"
    if not beta_dir.is_dir():
        raise CliConfigError(f"no trained models under {beta_dir}")
    return sorted(p.name for p in beta_dir.iterdir() if p.is_dir())


def _load_trained(run: Path, beta: float, subject: str, which: str):
    ckpt = run / "models" / f"beta_{_beta_tag(beta)}" / subject / which
    if not ckpt.is_dir():
        raise CliConfigError(f"checkpoint not found: {ckpt}")
    backbone, head, _ = load_checkpoint(ckpt)
    return backbone, head


def cmd_train(args) -> int:
    config, data_root = load_config(args.config)
    if args.seed is not None:
        config["training"]["seed"] = args.seed
    betas = _select_betas(config, args.beta)
    spec = _model_spec(config)
    prep = config["preprocess"]
    tr = config["training"]

    manifest = _data_path(config, data_root, "train_manifest")
    stimuli, responses = load_dataset(manifest)
    images = load_images(stimuli, size=(spec.input_size, spec.input_size))

    subjects = sorted(responses.keys())
    if args.subject is not None:
        if args.subject not in responses:
            raise CliConfigError(
                f"subject {args.subject!r} not in manifest (has {subjects})"
            )
        subjects = [args.subject]

    with _run_dir(args.out, args.overwrite) as out_dir:
        _write_resolved(
            out_dir,
            config,
            "train",
            {"beta": args.beta, "subject": args.subject, "seed": args.seed},
        )
        init = build_backbone(spec, seed=config["model"]["init_seed"])
        summary = []
        for subject in subjects:
            rois = responses[subject]
            if config["data"].get("training_roi"):
                roi = config["data"]["training_roi"]
                if roi not in rois:
                    raise CliConfigError(
                        f"training_roi {roi!r} not found for subject {subject} "
                        f"(has {sorted(rois)})"
                    )
            elif len(rois) == 1:
                roi = next(iter(rois))
            else:
                raise CliConfigError(
                    f"subject {subject} has ROIs {sorted(rois)}; set "
                    f"data.training_roi to pick one"
                )
            matrix = rois[roi].data
            pipeline = fit_response_pipeline(
                matrix, k=prep["pca_components"], standardize=prep["standardize"]
            )
            targets = pipeline.apply(matrix)
            for beta in betas:
                cfg = AlignmentConfig(
                    beta=beta,
                    learning_rate=tr["learning_rate"],
                    epochs=tr["epochs"],
                    batch_size=tr["batch_size"],
                    seed=tr["seed"],
                    rank_mode=tr["rank_mode"],
                    rank_temperature=tr["rank_temperature"],
                    update_bn_stats=tr["update_bn_stats"],
                    train_all_stages=tr["train_all_stages"],
                )
                dest = out_dir / "models" / f"beta_{_beta_tag(beta)}" / subject
                result = train(init, images, targets, cfg, out_dir=dest)
                last = result.log[-1]
                summary.append(
                    {
                        "subject": subject,
                        "roi": roi,
                        "beta": beta,
                        "steps": len(result.log),
                        "best_epoch": result.best_epoch,
                        "final_total": last["total"],
                        "final_generation": last["generation"],
                        "final_classification": last["classification"],
                    }
                )
                print(
                    f"trained subject={subject} beta={_beta_tag(beta)} "
                    f"steps={len(result.log)} final_total={last['total']:.4f}"
                )
        atomic_write_json(out_dir / "summary.json", {"runs": summary})
        print(f"wrote {out_dir}")
    return 0


def cmd_eval_fmri(args) -> int:
    config, data_root = load_config(args.config)
    run = Path(args.run)
    run_config = _load_run_config(run)
    spec = _model_spec(run_config)
    betas = _select_betas(config, args.beta)
    families = config["data"].get("test_manifests")
    if not families:
        raise CliConfigError("config is missing data.test_manifests")

    with _run_dir(args.out, args.overwrite) as out_dir:
        _write_resolved(
            out_dir,
            config,
            "eval-fmri",
            {"run": str(run), "beta": args.beta, "subject": args.subject,
             "checkpoint": args.checkpoint},
        )
        baseline = build_backbone(spec, seed=run_config["model"]["init_seed"])
        report: dict = {"checkpoint": args.checkpoint, "families": {}}
        for family, rel in sorted(families.items()):
            path = Path(rel) if Path(rel).is_absolute() else data_root / rel
            stimuli, responses = load_dataset(path)
            images = load_images(stimuli, size=(spec.input_size, spec.input_size))
            brain_rdms = {
                sub: {
                    roi: one_minus_pearson_rdm(mat.data, stimuli.stimulus_ids)
                    for roi, mat in rois.items()
                }
                for sub, rois in responses.items()
            }
            base_rdms = layer_rdms(baseline, images, stimuli.stimulus_ids)
            family_report: dict = {"per_beta": {}}
            for beta in betas:
                subjects = _trained_subjects(run, beta)
                if args.subject is not None:
                    subjects = [s for s in subjects if s == args.subject]
                    if not subjects:
                        raise CliConfigError(
                            f"subject {args.subject!r} has no model for "
                            f"beta={_beta_tag(beta)}"
                        )
                model_rdms = {}
                for subject in subjects:
                    backbone, _ = _load_trained(run, beta, subject, args.checkpoint)
                    model_rdms[subject] = layer_rdms(
                        backbone, images, stimuli.stimulus_ids
                    )
                within: dict = {}
                improvements = []
                for subject in subjects:
                    if subject not in brain_rdms:
                        continue
                    within[subject] = {}
                    for roi, brain in brain_rdms[subject].items():
                        aligned = roi_similarity(model_rdms[subject], brain)
                        base = roi_similarity(base_rdms, brain)
                        ratio = improvement_ratio(aligned.best_value, base.best_value)
                        within[subject][roi] = {
                            "aligned": aligned.best_value,
                            "aligned_stage": aligned.best_stage,
                            "baseline": base.best_value,
                            "baseline_stage": base.best_stage,
                            "improvement": ratio,
                        }
                        if ratio is not None:
                            improvements.append(ratio)
                across: dict = {}
                for model_sub in subjects:
                    for brain_sub, rois in brain_rdms.items():
                        if brain_sub == model_sub:
                            continue
                        across.setdefault(model_sub, {})[brain_sub] = {
                            roi: roi_similarity(model_rdms[model_sub], brain).best_value
                            for roi, brain in rois.items()
                        }
                family_report["per_beta"][_beta_tag(beta)] = {
                    "within_subject": within,
                    "across_subject": across,
                    "mean_improvement": (
                        float(np.mean(improvements)) if improvements else None
                    ),
                }
            report["families"][family] = family_report

            rois = sorted(
                {roi for rois in brain_rdms.values() for roi in rois}
            )
            bars = {"baseline": {}}
            for roi in rois:
                vals = [
                    roi_similarity(base_rdms, brain_rdms[sub][roi]).best_value
                    for sub in brain_rdms
                    if roi in brain_rdms[sub]
                ]
                bars["baseline"][roi] = float(np.mean(vals))
            for beta in betas:
                tag = _beta_tag(beta)
                per_beta = report["families"][family]["per_beta"][tag]
                label = f"beta={tag}"
                bars[label] = {}
                for roi in rois:
                    vals = [
                        entry[roi]["aligned"]
                        for entry in per_beta["within_subject"].values()
                        if roi in entry
                    ]
                    if vals:
                        bars[label][roi] = float(np.mean(vals))
            save_roi_similarity_figure(
                bars, out_dir / "figures", stem=f"roi_similarity_{family}"
            )
        atomic_write_json(out_dir / "fmri_report.json", report)
        print(f"wrote {out_dir / 'fmri_report.json'}")
    return 0


def cmd_eval_eeg(args) -> int:
    config, data_root = load_config(args.config)
    run = Path(args.run)
    run_config = _load_run_config(run)
    spec = _model_spec(run_config)
    betas = _select_betas(config, args.beta)
    dec = config["decoding"]
    ev = config["evaluation"]

    manifest = _data_path(config, data_root, "eeg_manifest")
    stimuli, epochs_by_subject = load_dataset(manifest)
    images = load_images(stimuli, size=(spec.input_size, spec.input_size))
    dec_config = DecodingConfig(
        k_pseudo_trials=dec["k_pseudo_trials"],
        n_folds=dec["n_folds"],
        classifier=dec["classifier"],
        seed=dec["seed"],
    )

    with _run_dir(args.out, args.overwrite) as out_dir:
        _write_resolved(
            out_dir,
            config,
            "eval-eeg",
            {"run": str(run), "beta": args.beta, "checkpoint": args.checkpoint},
        )
        eeg_subjects = sorted(epochs_by_subject.keys())
        subject_rdms = [
            build_eeg_rdms(epochs_by_subject[s], dec_config) for s in eeg_subjects
        ]
        timepoints = epoch_timepoints_ms(epochs_by_subject[eeg_subjects[0]])

        baseline = build_backbone(spec, seed=run_config["model"]["init_seed"])
        base_profile = temporal_similarity(
            layer_rdms(baseline, images, stimuli.stimulus_ids),
            subject_rdms,
            timepoints_ms=timepoints,
        )
        report = {
            "checkpoint": args.checkpoint,
            "stages": list(STAGE_NAMES),
            "timepoints_ms": [float(t) for t in timepoints],
            "eeg_subjects": eeg_subjects,
            "baseline": {"mean": base_profile.values.mean(axis=2).tolist()},
            "per_beta": {},
        }
        for beta in betas:
            tag = _beta_tag(beta)
            report["per_beta"][tag] = {}
            for model_sub in _trained_subjects(run, beta):
                backbone, _ = _load_trained(run, beta, model_sub, args.checkpoint)
                profile = temporal_similarity(
                    layer_rdms(backbone, images, stimuli.stimulus_ids),
                    subject_rdms,
                    timepoints_ms=timepoints,
                )
                contrast = temporal_contrast(
                    profile,
                    base_profile,
                    alpha=ev["alpha"],
                    n_permutations=ev["cluster_permutations"],
                    seed=dec["seed"],
                )
                report["per_beta"][tag][model_sub] = {
                    "mean": profile.values.mean(axis=2).tolist(),
                    "mean_difference": contrast.mean_difference.tolist(),
                    "p_values": contrast.p_values.tolist(),
                    "significant": contrast.significant.astype(int).tolist(),
                    "note": contrast.note,
                }
                save_temporal_figure(
                    profile.stages,
                    timepoints,
                    profile.values,
                    out_dir / "figures",
                    stem=f"temporal_beta_{tag}_{model_sub}",
                    significant=contrast.significant,
                )
        atomic_write_json(out_dir / "temporal_report.json", report)
        print(f"wrote {out_dir / 'temporal_report.json'}")
    return 0


def cmd_dims(args) -> int:
    config, data_root = load_config(args.config)
    run = Path(args.run)
    run_config = _load_run_config(run)
    spec = _model_spec(run_config)
    betas = _select_betas(config, args.beta)
    stage = config["dims"]["stage"]

    manifest = _data_path(config, data_root, "dims_manifest")
    stimuli, _ = load_dataset(manifest)
    images = load_images(stimuli, size=(spec.input_size, spec.input_size))
    values_path = _data_path(config, data_root, "features_values")
    try:
        feature_values = read_array(values_path)
    except ArrayFormatError as exc:
        raise ManifestValidationError(str(exc))
    names = config["data"].get("features_names")
    if not names:
        raise CliConfigError("config is missing data.features_names")
    if feature_values.shape != (len(stimuli), len(names)):
        raise ManifestValidationError(
            f"feature values {feature_values.shape} do not match "
            f"({len(stimuli)} stimuli, {len(names)} names)"
        )

    with _run_dir(args.out, args.overwrite) as out_dir:
        _write_resolved(
            out_dir,
            config,
            "dims",
            {"run": str(run), "beta": args.beta, "subject": args.subject,
             "checkpoint": args.checkpoint},
        )
        baseline = build_backbone(spec, seed=run_config["model"]["init_seed"])
        base_rdm = layer_rdms(baseline, images, stimuli.stimulus_ids)[stage]
        base_profile = dimension_profile(base_rdm, feature_values, names)
        report = {
            "stage": stage,
            "dimensions": names,
            "baseline_r_squared": base_profile.r_squared.tolist(),
            "per_beta": {},
        }
        save_dimension_figure(
            names, base_profile.r_squared, out_dir / "figures", stem="profile_baseline"
        )
        for beta in betas:
            tag = _beta_tag(beta)
            subjects = _trained_subjects(run, beta)
            if args.subject is not None:
                subjects = [s for s in subjects if s == args.subject]
            report["per_beta"][tag] = {}
            for subject in subjects:
                backbone, _ = _load_trained(run, beta, subject, args.checkpoint)
                rdm = layer_rdms(backbone, images, stimuli.stimulus_ids)[stage]
                profile = dimension_profile(rdm, feature_values, names)
                diff = difference_profile(profile, base_profile)
                report["per_beta"][tag][subject] = {
                    "r_squared": profile.r_squared.tolist(),
                    "difference_vs_baseline": diff.tolist(),
                }
                save_dimension_figure(
                    names,
                    profile.r_squared,
                    out_dir / "figures",
                    stem=f"profile_beta_{tag}_{subject}",
                )
                save_difference_figure(
                    names,
                    diff,
                    out_dir / "figures",
                    stem=f"difference_beta_{tag}_{subject}",
                )
        atomic_write_json(out_dir / "dimension_report.json", report)
        print(f"wrote {out_dir / 'dimension_report.json'}")
    return 0


def cmd_report(args) -> int:
    root = Path(args.run)
    if not root.is_dir():
        raise CliConfigError(f"{root} is not a directory")
    fmri_reports = sorted(root.rglob("fmri_report.json"))
    eeg_reports = sorted(root.rglob("temporal_report.json"))
    dim_reports = sorted(root.rglob("dimension_report.json"))
    train_summaries = sorted(root.rglob("summary.json"))
    train_summaries = [p for p in train_summaries if p.parent != root]
    if not (fmri_reports or eeg_reports or dim_reports or train_summaries):
        raise IngestionError(f"no runs found under {root}")

    summary: dict = {"source": str(root), "n_reports": 0}
    if train_summaries:
        runs = []
        for path in train_summaries:
            runs.extend(json.loads(path.read_text()).get("runs", []))
        summary["training"] = {
            "n_runs": len(runs),
            "betas": sorted({r["beta"] for r in runs}),
            "subjects": sorted({r["subject"] for r in runs}),
        }
    if fmri_reports:
        families: dict = {}
        for path in fmri_reports:
            report = json.loads(path.read_text())
            for family, body in report["families"].items():
                for tag, per_beta in body["per_beta"].items():
                    entry = families.setdefault(family, {}).setdefault(tag, [])
                    if per_beta["mean_improvement"] is not None:
                        entry.append(per_beta["mean_improvement"])
        summary["fmri"] = {
            family: {
                tag: (float(np.mean(vals)) if vals else None)
                for tag, vals in tags.items()
            }
            for family, tags in families.items()
        }
    if eeg_reports:
        stages_summary: dict = {}
        for path in eeg_reports:
            report = json.loads(path.read_text())
            for tag, models in report["per_beta"].items():
                for body in models.values():
                    sig = np.asarray(body["significant"])
                    for si, stage in enumerate(report["stages"]):
                        stages_summary.setdefault(tag, {}).setdefault(stage, 0)
                        stages_summary[tag][stage] += int(sig[si].sum())
        summary["eeg_significant_timepoints"] = stages_summary
    if dim_reports:
        top: dict = {}
        for path in dim_reports:
            report = json.loads(path.read_text())
            names = report["dimensions"]
            for tag, subjects in report["per_beta"].items():
                for body in subjects.values():
                    r2 = np.asarray(body["r_squared"])
                    order = np.argsort(r2)[::-1][:5]
                    top.setdefault(tag, []).append(
                        [[names[i], float(r2[i])] for i in order]
                    )
        summary["dims_top5"] = top
    summary["n_reports"] = (
        len(fmri_reports) + len(eeg_reports) + len(dim_reports) + len(train_summaries)
    )

    with _run_dir(args.out, args.overwrite) as out_dir:
        atomic_write_json(out_dir / "summary.json", summary)
        print(f"wrote {out_dir / 'summary.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="brainalign",
        description="Train and evaluate neurally aligned recurrent vision models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config=True, run=False):
        if config:
            p.add_argument("--config", required=True, help="JSON config file")
        if run:
            p.add_argument("--run", required=True, help="train output directory")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument(
            "--overwrite",
            action="store_true",
            help="write to a numbered sibling if the output directory is not empty",
        )

    p_train = sub.add_parser("train", help="align models to fMRI responses")
    add_common(p_train)
    p_train.add_argument("--seed", type=int, default=None, help="override training seed")
    p_train.add_argument("--beta", type=float, default=None, help="train only this beta")
    p_train.add_argument("--subject", default=None, help="train only this subject")
    p_train.set_defaults(func=cmd_train)

    p_fmri = sub.add_parser("eval-fmri", help="RDM similarity on test families")
    add_common(p_fmri, run=True)
    p_fmri.add_argument("--beta", type=float, default=None)
    p_fmri.add_argument("--subject", default=None)
    p_fmri.add_argument("--checkpoint", choices=["final", "best"], default="final")
    p_fmri.set_defaults(func=cmd_eval_fmri)

    p_eeg = sub.add_parser("eval-eeg", help="time-resolved EEG similarity")
    add_common(p_eeg, run=True)
    p_eeg.add_argument("--beta", type=float, default=None)
    p_eeg.add_argument("--checkpoint", choices=["final", "best"], default="final")
    p_eeg.set_defaults(func=cmd_eval_eeg)

    p_dims = sub.add_parser("dims", help="object-dimension unique variance")
    add_common(p_dims, run=True)
    p_dims.add_argument("--beta", type=float, default=None)
    p_dims.add_argument("--subject", default=None)
    p_dims.add_argument("--checkpoint", choices=["final", "best"], default="final")
    p_dims.set_defaults(func=cmd_dims)

    p_report = sub.add_parser("report", help="aggregate run reports")
    p_report.add_argument("--run", required=True, help="directory containing runs")
    p_report.add_argument("--out", required=True)
    p_report.add_argument("--overwrite", action="store_true")
    p_report.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    torch.set_num_threads(1)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _check_device()
        return args.func(args)
    except CliConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (IngestionError, ManifestValidationError, ArrayFormatError,
            FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - boundary of the CLI
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
