"""Output distillation losses and the combined training objective.

KL divergence between teacher and student class distributions at point and
voxel level, weighted cross entropy against hard labels, and the weighted
sum that forms the full objective. Gradients are with respect to student
logits and omit the conventional temperature-squared rescale; fold that
into the loss coefficients if needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .geometry import DEFAULT_IGNORE_LABEL

#: Student mimics teacher: KL(teacher || student). The standard choice.
KL_TEACHER_TO_STUDENT = "teacher_to_student"
#: Student-first argument order: KL(student || teacher).
KL_LITERAL = "literal"

_DIRECTIONS = (KL_TEACHER_TO_STUDENT, KL_LITERAL)


@dataclass
class LogitsTensor:
    """Per-element class logits, tagged as pointwise or voxelwise."""

    values: np.ndarray
    kind: str = "point"

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] < 2:
            raise InvalidInputError(
                f"logits must be (E, C) with C >= 2, got shape {self.values.shape}"
            )
        if not np.isfinite(self.values).all():
            raise InvalidInputError("logits must be finite")
        if self.kind not in ("point", "voxel"):
            raise InvalidInputError(f"kind must be 'point' or 'voxel', got {self.kind!r}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]


@dataclass
class LossWeights:
    """Coefficients and options for the combined objective."""

    alpha1: float = 0.1
    alpha2: float = 0.15
    beta1: float = 0.15
    beta2: float = 0.25
    temperature: float = 1.0
    kl_direction: str = KL_TEACHER_TO_STUDENT

    def __post_init__(self) -> None:
        for name in ("alpha1", "alpha2", "beta1", "beta2"):
            if getattr(self, name) < 0:
                raise InvalidInputError(f"{name} must be >= 0")
        if not self.temperature > 0:
            raise InvalidInputError(
                f"temperature must be > 0, got {self.temperature}"
            )
        if self.kl_direction not in _DIRECTIONS:
            raise InvalidInputError(
                f"kl_direction must be one of {_DIRECTIONS}, got {self.kl_direction!r}"
            )


@dataclass
class LossBreakdown:
    """The seven objective terms (unweighted) and their weighted total."""

    wce_point: float
    wce_voxel: float
    task_extra: float
    out_point: float
    out_voxel: float
    aff_point: float
    aff_voxel: float
    total: float


def softmax_probs(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Row-wise softmax of logits / temperature, stabilized by max subtraction."""
    if not temperature > 0:
        raise InvalidInputError(f"temperature must be > 0, got {temperature}")
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(values: np.ndarray, temperature: float) -> np.ndarray:
    z = values / temperature
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _check_pair(student: LogitsTensor, teacher: LogitsTensor) -> tuple[int, int]:
    if student.shape != teacher.shape:
        raise InvalidInputError(
            f"student/teacher shape mismatch: {student.shape} vs {teacher.shape}"
        )
    if student.kind != teacher.kind:
        raise InvalidInputError(
            f"student/teacher kind mismatch: {student.kind!r} vs {teacher.kind!r}"
        )
    return student.shape


def _normalizer_rows(e: int, total_rows: int | None) -> int:
    if total_rows is None:
        return e
    if total_rows < e:
        raise InvalidInputError(
            f"total_rows ({total_rows}) must be >= the number of rows ({e})"
        )
    return total_rows


def kl_output_loss(
    student: LogitsTensor,
    teacher: LogitsTensor,
    w: LossWeights,
    total_rows: int | None = None,
) -> float:
    """Mean per-row KL divergence between the two output distributions.

    Rows are softmaxed at ``w.temperature`` and the per-row divergences are
    averaged over rows * classes. ``total_rows`` substitutes a larger row
    count in the normalizer for the dense-grid reading of voxel outputs,
    where absent voxels hold identical (hence zero-divergence) rows.
    """
    e, c = _check_pair(student, teacher)
    log_s = _log_softmax(student.values, w.temperature)
    log_t = _log_softmax(teacher.values, w.temperature)
    if w.kl_direction == KL_TEACHER_TO_STUDENT:
        log_a, log_b = log_t, log_s
    else:
        log_a, log_b = log_s, log_t
    p_a = np.exp(log_a)
    total = float(np.sum(p_a * (log_a - log_b)))
    return total / (_normalizer_rows(e, total_rows) * c)


def kl_output_grad(
    student: LogitsTensor,
    teacher: LogitsTensor,
    w: LossWeights,
    total_rows: int | None = None,
) -> np.ndarray:
    """Gradient of :func:`kl_output_loss` with respect to student logits.

    In the default direction this is (p_student - p_teacher) / (E * C * T)
    per row; every gradient row sums to zero.
    """
    e, c = _check_pair(student, teacher)
    rows = _normalizer_rows(e, total_rows)
    log_s = _log_softmax(student.values, w.temperature)
    log_t = _log_softmax(teacher.values, w.temperature)
    p_s = np.exp(log_s)
    if w.kl_direction == KL_TEACHER_TO_STUDENT:
        grad = p_s - np.exp(log_t)
    else:
        g = log_s - log_t
        row_kl = np.sum(p_s * g, axis=-1, keepdims=True)
        grad = p_s * (g - row_kl)
    return grad / (rows * c * w.temperature)


def weighted_cross_entropy(
    logits: np.ndarray,
    labels: np.ndarray,
    class_weights: np.ndarray,
    ignore_label: int = DEFAULT_IGNORE_LABEL,
) -> float:
    """Class-weighted negative log likelihood, averaged over labeled rows.

    Rows labeled with ``ignore_label`` are skipped; if every row is
    skipped the loss is zero.
    """
    z = np.asarray(logits, dtype=np.float64)
    lab = np.asarray(labels, dtype=np.int64)
    cw = np.asarray(class_weights, dtype=np.float64)
    if z.ndim != 2:
        raise InvalidInputError(f"logits must be 2-D, got shape {z.shape}")
    e, c = z.shape
    if lab.shape != (e,):
        raise InvalidInputError(f"expected {e} labels, got shape {lab.shape}")
    if cw.shape != (c,):
        raise InvalidInputError(f"expected {c} class weights, got shape {cw.shape}")
    if cw.size and cw.min() < 0:
        raise InvalidInputError("class weights must be >= 0")
    keep = lab != ignore_label
    if keep.any():
        bad = keep & ((lab < 0) | (lab >= c))
        if bad.any():
            idx = int(np.flatnonzero(bad)[0])
            raise InvalidInputError(
                f"label {int(lab[idx])} at row {idx} outside [0, {c})"
            )
    if not keep.any():
        return 0.0
    log_p = _log_softmax(z[keep], 1.0)
    picked = log_p[np.arange(log_p.shape[0]), lab[keep]]
    return float(np.sum(-picked * cw[lab[keep]])) / int(keep.sum())


def combined_loss(
    wce_point: float,
    wce_voxel: float,
    task_extra: float,
    out_point: float,
    out_voxel: float,
    aff_point: float,
    aff_voxel: float,
    w: LossWeights,
) -> LossBreakdown:
    """Assemble the full objective from its seven precomputed terms.

    total = wce_point + wce_voxel + task_extra
            + alpha1 * out_point + alpha2 * out_voxel
            + beta1 * aff_point + beta2 * aff_voxel
    """
    parts = {
        "wce_point": wce_point,
        "wce_voxel": wce_voxel,
        "task_extra": task_extra,
        "out_point": out_point,
        "out_voxel": out_voxel,
        "aff_point": aff_point,
        "aff_voxel": aff_voxel,
    }
    for name, value in parts.items():
        if not math.isfinite(value):
            raise InvalidInputError(f"loss term {name} is not finite: {value}")
    total = (
        wce_point
        + wce_voxel
        + task_extra
        + w.alpha1 * out_point
        + w.alpha2 * out_voxel
        + w.beta1 * aff_point
        + w.beta2 * aff_voxel
    )
    return LossBreakdown(total=total, **parts)
