"""Object-dimension analysis: unique RDM variance per interpretable feature.

Each stimulus carries a vector of interpretable feature values (one entry per
dimension).  A dimension's RDM is the absolute difference of its values
between stimuli.  Its unique contribution to a model RDM is the squared
partial Spearman correlation between the model RDM and the dimension RDM,
controlling for every other dimension's RDM.

Partial Spearman is computed on strictly upper triangles: all vectors are
rank-transformed, target and predictor are residualized on the controls (with
intercept) by least squares, and the residuals are Pearson-correlated.  With
no controls this reduces exactly to plain Spearman.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .losses import correlation
from .rsa import RDM

# Above this design condition number the control regression switches to a
# small ridge penalty instead of failing outright.
CONDITION_LIMIT = 1e8


def feature_rdm(values: np.ndarray, stimulus_ids: list[str]) -> RDM:
    """Absolute pairwise differences of one feature across stimuli."""
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.shape[0] != len(stimulus_ids):
        raise ValueError(
            f"feature has {values.shape[0]} values for {len(stimulus_ids)} stimuli"
        )
    matrix = np.abs(values[:, None] - values[None, :])
    return RDM(matrix, list(stimulus_ids), "abs_feature_diff")


@dataclass
class PartialCorrelation:
    """Partial Spearman value with diagnostics of the control regression."""

    value: float
    n_controls: int
    condition_number: float
    ridge_lambda: float | None


def partial_spearman(
    x: np.ndarray,
    y: np.ndarray,
    controls: list[np.ndarray] | tuple = (),
    detail: bool = False,
):
    """Spearman correlation of ``x`` and ``y`` with controls regressed out.

    All inputs are 1-D vectors of equal length.  Returns a float, or a
    :class:`PartialCorrelation` when ``detail=True``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not controls:
        value = correlation(x, y, method="spearman")
        if detail:
            return PartialCorrelation(value, 0, 1.0, None)
        return value

    n = x.shape[0]
    for i, z in enumerate(controls):
        z = np.asarray(z)
        if z.ndim != 1 or z.shape[0] != n:
            raise ValueError(
                f"control {i} has shape {z.shape}, expected ({n},)"
            )
    rx = rankdata(x)
    ry = rankdata(y)
    cols = []
    for i, z in enumerate(controls):
        rz = rankdata(np.asarray(z, dtype=np.float64))
        if np.ptp(rz) == 0.0:
            raise ValueError(f"control {i} is constant; its ranks carry no information")
        cols.append(rz)
    design = np.column_stack([np.ones(n)] + cols)

    rank = np.linalg.matrix_rank(design)
    if rank < design.shape[1]:
        redundant = [
            i
            for i in range(len(cols))
            if np.linalg.matrix_rank(np.delete(design, i + 1, axis=1)) == rank
        ]
        raise ValueError(
            f"controls are collinear after ranking; redundant control indices: "
            f"{redundant}"
        )

    cond = float(np.linalg.cond(design))
    ridge_lambda = None
    if cond > CONDITION_LIMIT:
        gram = design.T @ design
        ridge_lambda = 1e-10 * float(np.trace(gram)) / gram.shape[0]
        solve = np.linalg.solve
        beta_x = solve(gram + ridge_lambda * np.eye(gram.shape[0]), design.T @ rx)
        beta_y = solve(gram + ridge_lambda * np.eye(gram.shape[0]), design.T @ ry)
    else:
        beta_x = np.linalg.lstsq(design, rx, rcond=None)[0]
        beta_y = np.linalg.lstsq(design, ry, rcond=None)[0]
    res_x = rx - design @ beta_x
    res_y = ry - design @ beta_y

    nx = np.linalg.norm(res_x)
    ny = np.linalg.norm(res_y)
    if nx < 1e-12 or ny < 1e-12:
        raise ValueError(
            "residual variance is zero: a vector is fully explained by the controls"
        )
    value = float((res_x @ res_y) / (nx * ny))
    if detail:
        return PartialCorrelation(value, len(cols), cond, ridge_lambda)
    return value


def rdm_partial_spearman(
    target: RDM, predictor: RDM, control_rdms: list[RDM], detail: bool = False
):
    """Partial Spearman over upper triangles of stimulus-aligned RDMs."""
    for other in [predictor] + list(control_rdms):
        if other.stimulus_ids != target.stimulus_ids:
            raise ValueError("RDMs are over different stimuli or different orderings")
    return partial_spearman(
        target.upper_triangle(),
        predictor.upper_triangle(),
        [c.upper_triangle() for c in control_rdms],
        detail=detail,
    )


@dataclass
class DimensionProfile:
    """Unique-variance profile: squared partial correlation per dimension."""

    dimension_names: list[str]
    r: np.ndarray  # partial Spearman per dimension
    r_squared: np.ndarray


def dimension_profile(
    target: RDM, feature_values: np.ndarray, dimension_names: list[str]
) -> DimensionProfile:
    """Per-dimension unique contribution to the target RDM.

    ``feature_values`` is ``[n_stimuli, n_dimensions]``.  For each dimension,
    its feature RDM is correlated with the target while all other dimensions'
    feature RDMs are controlled.
    """
    feature_values = np.asarray(feature_values, dtype=np.float64)
    n_stim = len(target.stimulus_ids)
    if feature_values.shape != (n_stim, len(dimension_names)):
        raise ValueError(
            f"feature_values must be [{n_stim}, {len(dimension_names)}], got "
            f"{feature_values.shape}"
        )
    spans = feature_values.max(axis=0) - feature_values.min(axis=0)
    flat = np.flatnonzero(spans == 0.0)
    if flat.size:
        raise ValueError(
            f"dimension {dimension_names[flat[0]]!r} is constant across stimuli"
        )
    uppers = [
        feature_rdm(feature_values[:, d], target.stimulus_ids).upper_triangle()
        for d in range(len(dimension_names))
    ]
    target_upper = target.upper_triangle()
    r = np.zeros(len(dimension_names))
    for d in range(len(dimension_names)):
        controls = [uppers[j] for j in range(len(uppers)) if j != d]
        r[d] = partial_spearman(target_upper, uppers[d], controls)
    return DimensionProfile(
        dimension_names=list(dimension_names), r=r, r_squared=r**2
    )


def difference_profile(a: DimensionProfile, b: DimensionProfile) -> np.ndarray:
    """Per-dimension difference in unique variance, ``a`` minus ``b``."""
    if a.dimension_names != b.dimension_names:
        raise ValueError("profiles cover different dimensions")
    return a.r_squared - b.r_squared
