"""The two entry points and their status protocol."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pvd import (
    FeatureBlock,
    LogitsTensor,
    LossWeights,
    PVDError,
    affinity_distill_grad,
    affinity_distill_loss,
    cosine_affinity,
    kl_output_grad,
    kl_output_loss,
)

#: Semantic version of the call boundary (not of the implementation).
BRIDGE_VERSION = "1.0.0"

CODE_OK = 0
CODE_SHAPE_MISMATCH = 1
CODE_INVALID_ARGUMENT = 2
CODE_INTERNAL_ERROR = 3

KL_DIRECTIONS = ("teacher_to_student", "literal")

#: Documented symbol table of the boundary.
SYMBOLS = {
    "bridge_version": "() -> str",
    "bridge_kl_loss": (
        "(student_flat: f64[E*C], teacher_flat: f64[E*C], e: int, c: int, "
        "temperature: float, direction: str) -> (loss: float, grad: f64[E*C], "
        "status: BridgeStatus)"
    ),
    "bridge_affinity_loss": (
        "(student_feats: f64[K*N*C], teacher_feats: f64[K*N*C], "
        "masks: bool[K*N], k: int, n_t: int, c_f: int) -> (loss: float, "
        "grads: f64[K*N*C], status: BridgeStatus)"
    ),
}


@dataclass
class BridgeStatus:
    """Outcome of one bridge call; nonzero codes carry a message."""

    code: int
    message: str = ""

    def __post_init__(self) -> None:
        if self.code != CODE_OK and not self.message:
            raise ValueError("nonzero status requires a message")

    @property
    def ok(self) -> bool:
        return self.code == CODE_OK


_OK = BridgeStatus(CODE_OK)


def bridge_version() -> str:
    """Semantic version of the call boundary."""
    return BRIDGE_VERSION


def _fail(code: int, message: str) -> tuple[float, None, BridgeStatus]:
    return 0.0, None, BridgeStatus(code, message)


def _flat(buffer, name: str) -> np.ndarray:
    arr = np.asarray(buffer, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a flat (1-D) buffer, got {arr.ndim}-D")
    return arr


def bridge_kl_loss(
    student_flat,
    teacher_flat,
    e: int,
    c: int,
    temperature: float,
    direction: str = "teacher_to_student",
):
    """Output-distillation KL loss and student-logit gradient.

    ``student_flat`` and ``teacher_flat`` are row-major (E, C) logits as
    flat 64-bit buffers. Returns ``(loss, grad_flat, status)``.
    """
    try:
        student = _flat(student_flat, "student_flat")
        teacher = _flat(teacher_flat, "teacher_flat")
    except (ValueError, TypeError) as exc:
        return _fail(CODE_INVALID_ARGUMENT, str(exc))
    if e < 1 or c < 2:
        return _fail(CODE_INVALID_ARGUMENT, f"need e >= 1 and c >= 2, got ({e}, {c})")
    if not temperature > 0:
        return _fail(CODE_INVALID_ARGUMENT, f"temperature must be > 0, got {temperature}")
    if direction not in KL_DIRECTIONS:
        return _fail(CODE_INVALID_ARGUMENT, f"unknown direction {direction!r}")
    if student.shape[0] != e * c or teacher.shape[0] != e * c:
        return _fail(
            CODE_SHAPE_MISMATCH,
            f"expected {e * c} values per side, got {student.shape[0]} student "
            f"and {teacher.shape[0]} teacher",
        )
    try:
        w = LossWeights(temperature=temperature, kl_direction=direction)
        s = LogitsTensor(student.reshape(e, c))
        t = LogitsTensor(teacher.reshape(e, c))
        loss = kl_output_loss(s, t, w)
        grad = kl_output_grad(s, t, w)
    except PVDError as exc:
        return _fail(CODE_INVALID_ARGUMENT, str(exc))
    except Exception as exc:  # pragma: no cover - exercised via fault injection
        return _fail(CODE_INTERNAL_ERROR, f"{type(exc).__name__}: {exc}")
    return float(loss), grad.reshape(-1), _OK


def bridge_affinity_loss(
    student_feats,
    teacher_feats,
    masks,
    k: int,
    n_t: int,
    c_f: int,
):
    """Affinity-distillation loss and student-feature gradients.

    Both feature buffers are row-major (K, N_t, C_f); ``masks`` is a
    row-major (K, N_t) validity buffer shared by teacher and student.
    Rows flagged invalid must hold zeros. Returns
    ``(loss, grads_flat, status)``.
    """
    try:
        student = _flat(student_feats, "student_feats")
        teacher = _flat(teacher_feats, "teacher_feats")
        mask_arr = np.asarray(masks)
    except (ValueError, TypeError) as exc:
        return _fail(CODE_INVALID_ARGUMENT, str(exc))
    if k < 1 or n_t < 1 or c_f < 1:
        return _fail(
            CODE_INVALID_ARGUMENT,
            f"need k, n_t, c_f >= 1, got ({k}, {n_t}, {c_f})",
        )
    if mask_arr.ndim != 1:
        return _fail(CODE_INVALID_ARGUMENT, "masks must be a flat (1-D) buffer")
    n_feat = k * n_t * c_f
    if student.shape[0] != n_feat or teacher.shape[0] != n_feat:
        return _fail(
            CODE_SHAPE_MISMATCH,
            f"expected {n_feat} feature values per side, got "
            f"{student.shape[0]} student and {teacher.shape[0]} teacher",
        )
    if mask_arr.shape[0] != k * n_t:
        return _fail(
            CODE_SHAPE_MISMATCH,
            f"expected {k * n_t} mask values, got {mask_arr.shape[0]}",
        )
    mask = mask_arr.astype(bool).reshape(k, n_t)
    s_rows = student.reshape(k, n_t, c_f)
    t_rows = teacher.reshape(k, n_t, c_f)
    try:
        s_blocks, t_mats = [], []
        for r in range(k):
            kept = [int(i) for i in np.flatnonzero(mask[r])]
            s_blocks.append(FeatureBlock(s_rows[r], mask[r], kept))
            t_mats.append(cosine_affinity(FeatureBlock(t_rows[r], mask[r], kept)))
        loss = affinity_distill_loss(
            [cosine_affinity(b) for b in s_blocks], t_mats
        )
        grads = affinity_distill_grad(s_blocks, t_mats)
    except PVDError as exc:
        return _fail(CODE_INVALID_ARGUMENT, str(exc))
    except Exception as exc:  # pragma: no cover - exercised via fault injection
        return _fail(CODE_INTERNAL_ERROR, f"{type(exc).__name__}: {exc}")
    return float(loss), np.concatenate([g.reshape(-1) for g in grads]), _OK
