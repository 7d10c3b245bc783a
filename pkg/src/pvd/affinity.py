"""Pairwise-affinity distillation over sampled supervoxels.

A supervoxel's features are trimmed or zero-padded to a fixed row count,
turned into a cosine-similarity matrix, and the student is penalized by the
mean squared difference between its matrices and the teacher's. The
gradient of that objective with respect to the student features is
available in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInputError

#: Rows with L2 norm below this are treated as padding: their affinity row,
#: column, and diagonal entry are zero, and no gradient flows through them.
NORM_EPSILON = 1e-12


@dataclass
class FeatureBlock:
    """Fixed-size feature rows for one supervoxel.

    ``valid_mask`` distinguishes real rows from zero padding and
    ``kept_indices`` records which input rows survived selection, so a
    caller can gather teacher and student features identically.
    """

    features: np.ndarray
    valid_mask: np.ndarray
    kept_indices: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.valid_mask = np.asarray(self.valid_mask, dtype=bool)
        if self.features.ndim != 2:
            raise InvalidInputError(
                f"features must be 2-D, got shape {self.features.shape}"
            )
        if self.valid_mask.shape != (self.features.shape[0],):
            raise InvalidInputError(
                f"valid_mask must have shape ({self.features.shape[0]},), "
                f"got {self.valid_mask.shape}"
            )
        if np.any(self.features[~self.valid_mask]):
            raise InvalidInputError("padded rows must be exactly zero")
        if len(set(self.kept_indices)) != len(self.kept_indices):
            raise InvalidInputError("kept_indices must be distinct")
        if len(self.kept_indices) != int(self.valid_mask.sum()):
            raise InvalidInputError("kept_indices must match the valid row count")

    @property
    def size(self) -> int:
        return self.features.shape[0]


@dataclass
class AffinityMatrix:
    """Symmetric pairwise cosine-similarity matrix with entries in [-1, 1]."""

    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        v = self.values
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise InvalidInputError(f"affinity matrix must be square, got {v.shape}")
        if v.size:
            if v.min() < -1.0 or v.max() > 1.0:
                raise InvalidInputError("affinity entries must lie in [-1, 1]")
            if np.abs(v - v.T).max() > 1e-12:
                raise InvalidInputError("affinity matrix must be symmetric")

    @property
    def size(self) -> int:
        return self.values.shape[0]


def select_and_pad(
    features: np.ndarray,
    labels: np.ndarray,
    minority: np.ndarray,
    target: int,
    seed: int,
) -> FeatureBlock:
    """Reduce or zero-pad feature rows to exactly ``target`` rows.

    When there are too many rows, uniformly random majority-class rows are
    discarded first; only if that is not enough are minority rows dropped
    too. Surviving rows keep their original relative order. When there are
    too few, all-zero rows are appended. Labels outside the minority
    table's range (e.g. the ignore label) count as majority.
    """
    feats = np.asarray(features, dtype=np.float64)
    lab = np.asarray(labels, dtype=np.int64)
    minority = np.asarray(minority, dtype=bool)
    if target < 1:
        raise InvalidInputError(f"target must be >= 1, got {target}")
    if seed < 0:
        raise InvalidInputError(f"seed must be non-negative, got {seed}")
    if feats.ndim != 2:
        raise InvalidInputError(f"features must be 2-D, got shape {feats.shape}")
    n = feats.shape[0]
    if lab.shape != (n,):
        raise InvalidInputError(f"expected {n} labels, got shape {lab.shape}")

    if n <= target:
        kept = np.arange(n)
    else:
        in_table = (lab >= 0) & (lab < minority.shape[0])
        is_minor = np.zeros(n, dtype=bool)
        is_minor[in_table] = minority[lab[in_table]]
        majority_rows = np.flatnonzero(~is_minor)
        minority_rows = np.flatnonzero(is_minor)
        n_drop = n - target
        rng = np.random.Generator(np.random.PCG64(seed))
        if majority_rows.shape[0] >= n_drop:
            drop = rng.permutation(majority_rows)[:n_drop]
        else:
            extra = n_drop - majority_rows.shape[0]
            drop = np.concatenate(
                [majority_rows, rng.permutation(minority_rows)[:extra]]
            )
        kept = np.setdiff1d(np.arange(n), drop)

    out = np.zeros((target, feats.shape[1]), dtype=np.float64)
    out[: kept.shape[0]] = feats[kept]
    mask = np.zeros(target, dtype=bool)
    mask[: kept.shape[0]] = True
    return FeatureBlock(out, mask, kept_indices=[int(i) for i in kept])


def cosine_affinity(block: FeatureBlock) -> AffinityMatrix:
    """Pairwise cosine similarity of the block's rows.

    Entry (i, j) is dot(f_i, f_j) / (|f_i| |f_j|) whenever both norms are at
    least ``NORM_EPSILON``; otherwise it is zero, which makes padded rows
    contribute all-zero rows and columns (diagonal included).
    """
    feats = block.features
    norms = np.sqrt(np.einsum("ij,ij->i", feats, feats))
    safe = norms >= NORM_EPSILON
    unit = np.zeros_like(feats)
    if safe.any():
        unit[safe] = feats[safe] / norms[safe, None]
    values = unit @ unit.T
    np.clip(values, -1.0, 1.0, out=values)
    diag = np.arange(block.size)
    values[diag, diag] = np.where(safe, 1.0, 0.0)
    return AffinityMatrix(values)


def _check_matched(
    student: Sequence[AffinityMatrix], teacher: Sequence[AffinityMatrix]
) -> int:
    if len(student) == 0 or len(student) != len(teacher):
        raise InvalidInputError(
            f"need equal, non-zero matrix counts, got {len(student)} student "
            f"and {len(teacher)} teacher"
        )
    size = student[0].size
    for r, (s, t) in enumerate(zip(student, teacher)):
        if s.size != size or t.size != size:
            raise InvalidInputError(
                f"matrix {r} has mismatched size ({s.size} vs {t.size}, "
                f"expected {size})"
            )
    return size


def affinity_distill_loss(
    student: Sequence[AffinityMatrix], teacher: Sequence[AffinityMatrix]
) -> float:
    """Mean squared entry difference over all matrix pairs.

    Averages over every entry of every matrix, padded positions included,
    so the normalizer is (number of matrices) * size^2.
    """
    size = _check_matched(student, teacher)
    total = 0.0
    for s, t in zip(student, teacher):
        diff = s.values - t.values
        total += float(np.sum(diff * diff))
    return total / (len(student) * size * size)


def affinity_distill_grad(
    student_blocks: Sequence[FeatureBlock],
    teacher_aff: Sequence[AffinityMatrix],
) -> list[np.ndarray]:
    """Gradient of the affinity loss with respect to student features.

    For each block this differentiates
    ``affinity_distill_loss(cosine_affinity(block), teacher)`` through the
    cosine normalization. Padded or zero-norm rows receive zero gradient.
    """
    if len(student_blocks) == 0 or len(student_blocks) != len(teacher_aff):
        raise InvalidInputError(
            f"need equal, non-zero block counts, got {len(student_blocks)} "
            f"blocks and {len(teacher_aff)} teacher matrices"
        )
    k = len(student_blocks)
    size = student_blocks[0].size
    grads: list[np.ndarray] = []
    for r, (block, taff) in enumerate(zip(student_blocks, teacher_aff)):
        if block.size != size or taff.size != size:
            raise InvalidInputError(
                f"block {r} has mismatched size ({block.size} vs {taff.size}, "
                f"expected {size})"
            )
        feats = block.features
        norms = np.sqrt(np.einsum("ij,ij->i", feats, feats))
        active = block.valid_mask & (norms >= NORM_EPSILON)
        unit = np.zeros_like(feats)
        if active.any():
            unit[active] = feats[active] / norms[active, None]
        aff = cosine_affinity(block).values

        scale = 2.0 / (k * size * size)
        coef = scale * (aff - taff.values)
        b = coef + coef.T
        diag = np.arange(size)
        b[diag, diag] = 0.0
        b[:, ~active] = 0.0

        grad = b @ unit - (b * aff).sum(axis=1, keepdims=True) * unit
        grad[active] /= norms[active, None]
        grad[~active] = 0.0
        grads.append(grad)
    return grads
