"""Difficulty-aware supervoxel sampling.

The voxel grid is partitioned into fixed-size supervoxels. Each supervoxel
gets a selection weight that favors regions containing rare classes and
regions far from the sensor; a seeded weighted draw without replacement
then picks the supervoxels used for affinity distillation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .geometry import DEFAULT_IGNORE_LABEL, CylindricalGridSpec

PROB_SUM_TOL = 1e-12


@dataclass(frozen=True)
class SupervoxelSpec:
    """Supervoxel size in voxels per axis (radial, angular, height)."""

    size: tuple[int, int, int] = (120, 60, 8)

    def __post_init__(self) -> None:
        if min(self.size) < 1:
            raise InvalidInputError(f"supervoxel size must be >= 1, got {self.size}")

    def counts(self, grid: CylindricalGridSpec) -> tuple[int, int, int]:
        """Supervoxels per axis: ceil(bins / size)."""
        for axis, (n_bins, n_sv) in enumerate(zip(grid.bins, self.size)):
            if n_sv > n_bins:
                raise InvalidInputError(
                    f"supervoxel size {n_sv} exceeds grid bins {n_bins} on axis {axis}"
                )
        return tuple(
            math.ceil(b / s) for b, s in zip(grid.bins, self.size)
        )  # type: ignore[return-value]


@dataclass
class SamplerConfig:
    """Knobs for the difficulty-aware sampler.

    ``beta = 0`` degenerates to distance-only sampling (the class factor
    becomes constant); ``distance_aware = False`` drops the radial factor,
    leaving category-only sampling.
    """

    alpha: float = 4.0
    beta: float = -2.0
    minority_threshold: float = 0.01
    k: int = 4
    seed: int = 0
    distance_aware: bool = True

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise InvalidInputError(f"alpha must be > 0, got {self.alpha}")
        if self.beta > 0:
            raise InvalidInputError(f"beta must be <= 0, got {self.beta}")
        if not 0 < self.minority_threshold < 1:
            raise InvalidInputError(
                f"minority_threshold must lie in (0, 1), got {self.minority_threshold}"
            )
        if self.k < 1:
            raise InvalidInputError(f"k must be >= 1, got {self.k}")


@dataclass
class SupervoxelWeights:
    """Unnormalized weights, selection probabilities, and the radial factor."""

    weights: np.ndarray
    probs: np.ndarray
    d_over_r: np.ndarray
    uniform_fallback: bool = False


def supervoxel_count(grid: CylindricalGridSpec, sv: SupervoxelSpec) -> int:
    """Total number of supervoxels covering the grid."""
    n_r, n_a, n_h = sv.counts(grid)
    return n_r * n_a * n_h


def minority_classes(
    class_point_counts: np.ndarray, threshold: float = 0.01
) -> np.ndarray:
    """Flag classes holding at most ``threshold`` of all points as minority."""
    counts = np.asarray(class_point_counts, dtype=np.int64)
    if counts.ndim != 1:
        raise InvalidInputError(f"counts must be 1-D, got shape {counts.shape}")
    if counts.size and counts.min() < 0:
        raise InvalidInputError("class counts must be non-negative")
    total = int(counts.sum())
    if total == 0:
        raise InvalidInputError("class counts are all zero")
    return counts / total <= threshold


def class_frequency_weight(
    n_minor: int, alpha: float = 4.0, beta: float = -2.0
) -> float:
    """Class-rarity factor: alpha * exp(beta * n_minor) + 1.

    Equals alpha + 1 when a supervoxel holds no minority voxels and decays
    toward 1 as the count of minority voxels grows.
    """
    if not alpha > 0:
        raise InvalidInputError(f"alpha must be > 0, got {alpha}")
    if beta > 0:
        raise InvalidInputError(f"beta must be <= 0, got {beta}")
    if n_minor < 0:
        raise InvalidInputError(f"n_minor must be >= 0, got {n_minor}")
    return alpha * math.exp(beta * n_minor) + 1.0


def supervoxel_index_of(
    voxel_coords: np.ndarray, grid: CylindricalGridSpec, sv: SupervoxelSpec
) -> np.ndarray:
    """Flat supervoxel index for each (r, a, h) voxel coordinate."""
    coords = np.asarray(voxel_coords, dtype=np.int64)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise InvalidInputError(f"voxel coords must be (M, 3), got {coords.shape}")
    bins = np.array(grid.bins, dtype=np.int64)
    if coords.shape[0] and (coords.min() < 0 or (coords >= bins).any()):
        raise InvalidInputError("voxel coordinate outside grid bins")
    n_r, n_a, n_h = sv.counts(grid)
    sub = coords // np.array(sv.size, dtype=np.int64)
    return (sub[:, 0] * n_a + sub[:, 1]) * n_h + sub[:, 2]


def supervoxel_weights(
    voxel_coords: np.ndarray,
    voxel_labels: np.ndarray,
    grid: CylindricalGridSpec,
    sv: SupervoxelSpec,
    minority: np.ndarray,
    cfg: SamplerConfig,
    ignore_label: int = DEFAULT_IGNORE_LABEL,
) -> SupervoxelWeights:
    """Compute per-supervoxel selection weights and probabilities.

    For supervoxel i with n_i minority-labeled occupied voxels and outer
    radial boundary d_i:

        W_i = 1 / (alpha * exp(beta * n_i) + 1) * (d_i / r_max) * (1 / N_s)

    Probabilities are the weights normalized to sum 1. Voxels whose
    majority label is the ignore label never count as minority.
    """
    labels = np.asarray(voxel_labels, dtype=np.int64)
    minority = np.asarray(minority, dtype=bool)
    sv_index = supervoxel_index_of(voxel_coords, grid, sv)
    if labels.shape != (sv_index.shape[0],):
        raise InvalidInputError(
            f"expected {sv_index.shape[0]} voxel labels, got shape {labels.shape}"
        )
    real = labels != ignore_label
    if real.any():
        if labels[real].min() < 0 or labels[real].max() >= minority.shape[0]:
            raise InvalidInputError(
                f"voxel label outside [0, {minority.shape[0]}) and not ignore"
            )
    is_minor = np.zeros(labels.shape[0], dtype=bool)
    is_minor[real] = minority[labels[real]]

    n_r, n_a, n_h = sv.counts(grid)
    n_sv = n_r * n_a * n_h
    n_minor = np.bincount(sv_index[is_minor], minlength=n_sv).astype(np.int64)

    r_bins = grid.bins[0]
    width_r = grid.widths[0]
    radial_band = np.arange(n_sv, dtype=np.int64) // (n_a * n_h)
    outer_bin = np.minimum((radial_band + 1) * sv.size[0], r_bins)
    d_outer = grid.r_range[0] + outer_bin * width_r
    d_over_r = d_outer / grid.r_range[1]

    f_class = cfg.alpha * np.exp(cfg.beta * n_minor) + 1.0
    radial_factor = d_over_r if cfg.distance_aware else np.ones(n_sv)
    weights = (1.0 / f_class) * radial_factor * (1.0 / n_sv)

    total = weights.sum()
    if total > 0:
        probs = weights / total
        fallback = False
    else:
        probs = np.full(n_sv, 1.0 / n_sv)
        fallback = True
        warnings.warn("all supervoxel weights are zero; using uniform probabilities")
    return SupervoxelWeights(
        weights=weights, probs=probs, d_over_r=d_over_r, uniform_fallback=fallback
    )


def sample_supervoxels(
    weights: SupervoxelWeights, k: int, seed: int
) -> np.ndarray:
    """Draw ``k`` distinct supervoxel indices without replacement.

    Each draw picks from the residual weights renormalized over the not-yet
    chosen supervoxels; the generator is local to the call, so identical
    (weights, k, seed) always reproduce the same indices. The result is
    sorted ascending.
    """
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    if seed < 0:
        raise InvalidInputError(f"seed must be non-negative, got {seed}")
    residual = np.array(weights.probs, dtype=np.float64, copy=True)
    if residual.ndim != 1:
        raise InvalidInputError("probs must be 1-D")
    support = int(np.count_nonzero(residual > 0))
    if k > support:
        warnings.warn(
            f"requested {k} supervoxels but only {support} have positive "
            "probability; sampling all of them"
        )
        k = support
    rng = np.random.Generator(np.random.PCG64(seed))
    picked = np.empty(k, dtype=np.int64)
    for i in range(k):
        cum = np.cumsum(residual)
        u = rng.random() * cum[-1]
        j = int(np.searchsorted(cum, u, side="right"))
        # u can round up to exactly cum[-1]; step back onto the last
        # positive-weight entry in that case.
        j = min(j, residual.shape[0] - 1)
        while residual[j] == 0.0:
            j -= 1
        picked[i] = j
        residual[j] = 0.0
    picked.sort()
    return picked
