"""Report figures with numeric sidecars.

Every figure is rendered headlessly to PNG with metadata stripped, so
repeated runs on identical inputs produce identical bytes, and each figure is
accompanied by a CSV holding the exact plotted numbers.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KWARGS = {"dpi": 120, "metadata": {"Software": None}}


def _write_csv(path: Path, header: list[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [f"{v:.10g}" if isinstance(v, float) else v for v in row]
            )
    return path


def save_roi_similarity_figure(
    per_model: dict[str, dict[str, float]],
    out_dir: str | Path,
    stem: str = "roi_similarity",
) -> tuple[Path, Path]:
    """Grouped bars of model-brain similarity per ROI, one group per ROI."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    models = list(per_model.keys())
    rois = list(next(iter(per_model.values())).keys())
    width = 0.8 / max(1, len(models))
    x = np.arange(len(rois))

    fig, ax = plt.subplots(figsize=(1.5 + 1.2 * len(rois), 3.5))
    for mi, model in enumerate(models):
        vals = [per_model[model].get(roi, np.nan) for roi in rois]
        ax.bar(x + mi * width, vals, width=width, label=model)
    ax.set_xticks(x + width * (len(models) - 1) / 2)
    ax.set_xticklabels(rois)
    ax.set_ylabel("Spearman RDM correlation")
    ax.legend(fontsize=8)
    fig.tight_layout()
    png = out_dir / f"{stem}.png"
    fig.savefig(png, **_SAVE_KWARGS)
    plt.close(fig)

    rows = [
        [model, roi, float(per_model[model].get(roi, np.nan))]
        for model in models
        for roi in rois
    ]
    csv_path = _write_csv(out_dir / f"{stem}.csv", ["model", "roi", "similarity"], rows)
    return png, csv_path


def save_temporal_figure(
    stages: tuple[str, ...],
    timepoints_ms: np.ndarray,
    values: np.ndarray,  # [n_stages, n_timepoints, n_subjects]
    out_dir: str | Path,
    stem: str = "temporal_similarity",
    significant: np.ndarray | None = None,
) -> tuple[Path, Path]:
    """Per-stage similarity over time: subject mean with an SEM band.

    ``significant`` marks (stage, timepoint) cells to dot along the bottom of
    the corresponding panel.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_stages, n_t, n_subj = values.shape
    mean = values.mean(axis=2)
    sem = (
        values.std(axis=2, ddof=1) / np.sqrt(n_subj)
        if n_subj > 1
        else np.zeros((n_stages, n_t))
    )

    fig, axes = plt.subplots(
        1, n_stages, figsize=(2.6 * n_stages, 3.0), sharey=True, squeeze=False
    )
    for s, stage in enumerate(stages):
        ax = axes[0, s]
        ax.plot(timepoints_ms, mean[s], lw=1.5)
        ax.fill_between(
            timepoints_ms, mean[s] - sem[s], mean[s] + sem[s], alpha=0.3, lw=0
        )
        if significant is not None and significant[s].any():
            ymin = (mean - sem).min()
            ax.plot(
                timepoints_ms[significant[s]],
                np.full(int(significant[s].sum()), ymin),
                ".",
                ms=4,
                color="black",
            )
        ax.set_title(stage, fontsize=9)
        ax.set_xlabel("time (ms)")
    axes[0, 0].set_ylabel("Spearman RDM correlation")
    fig.tight_layout()
    png = out_dir / f"{stem}.png"
    fig.savefig(png, **_SAVE_KWARGS)
    plt.close(fig)

    rows = []
    for s, stage in enumerate(stages):
        for t in range(n_t):
            row = [stage, float(timepoints_ms[t]), float(mean[s, t]), float(sem[s, t])]
            if significant is not None:
                row.append(int(significant[s, t]))
            rows.append(row)
    header = ["stage", "time_ms", "mean", "sem"]
    if significant is not None:
        header.append("significant")
    csv_path = _write_csv(out_dir / f"{stem}.csv", header, rows)
    return png, csv_path


def save_dimension_figure(
    dimension_names: list[str],
    r_squared: np.ndarray,
    out_dir: str | Path,
    stem: str = "dimension_profile",
) -> tuple[Path, Path]:
    """Bar chart of unique variance per interpretable dimension."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    x = np.arange(len(dimension_names))
    fig, ax = plt.subplots(figsize=(max(4.0, 0.25 * len(dimension_names)), 3.2))
    ax.bar(x, r_squared, width=0.8)
    ax.set_xticks(x)
    ax.set_xticklabels(dimension_names, rotation=90, fontsize=6)
    ax.set_ylabel("unique variance (r^2)")
    fig.tight_layout()
    png = out_dir / f"{stem}.png"
    fig.savefig(png, **_SAVE_KWARGS)
    plt.close(fig)
    csv_path = _write_csv(
        out_dir / f"{stem}.csv",
        ["dimension", "r_squared"],
        [[n, float(v)] for n, v in zip(dimension_names, r_squared)],
    )
    return png, csv_path


def save_difference_figure(
    dimension_names: list[str],
    difference: np.ndarray,
    out_dir: str | Path,
    stem: str = "dimension_difference",
) -> tuple[Path, Path]:
    """Signed per-dimension change in unique variance between two models."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    x = np.arange(len(dimension_names))
    colors = ["tab:red" if v < 0 else "tab:blue" for v in difference]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.25 * len(dimension_names)), 3.2))
    ax.bar(x, difference, width=0.8, color=colors)
    ax.axhline(0.0, color="black", lw=0.8)
    ax.set_xticks(x)
    ax.set_xticklabels(dimension_names, rotation=90, fontsize=6)
    ax.set_ylabel("delta r^2")
    fig.tight_layout()
    png = out_dir / f"{stem}.png"
    fig.savefig(png, **_SAVE_KWARGS)
    plt.close(fig)
    csv_path = _write_csv(
        out_dir / f"{stem}.csv",
        ["dimension", "delta_r_squared"],
        [[n, float(v)] for n, v in zip(dimension_names, difference)],
    )
    return png, csv_path
