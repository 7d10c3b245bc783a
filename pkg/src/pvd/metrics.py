"""Segmentation evaluation and compute-cost estimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .geometry import DEFAULT_IGNORE_LABEL


@dataclass
class ConfusionMatrix:
    """Counts indexed by (ground-truth class, predicted class)."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts, dtype=np.int64)
        c = self.counts
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise InvalidInputError(f"confusion matrix must be square, got {c.shape}")
        if c.size and c.min() < 0:
            raise InvalidInputError("confusion counts must be >= 0")

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]


def confusion_matrix(
    pred: np.ndarray,
    gt: np.ndarray,
    n_classes: int,
    ignore_label: int = DEFAULT_IGNORE_LABEL,
) -> ConfusionMatrix:
    """Accumulate prediction/ground-truth pairs, skipping ignored truth.

    Rows whose ground truth carries the ignore label are dropped before any
    validation, so a prediction file may mirror the ignore entries of its
    ground truth (self-comparison is always legal). At evaluated rows the
    prediction must be a class id; the ignore label is not one.
    """
    p = np.asarray(pred, dtype=np.int64)
    g = np.asarray(gt, dtype=np.int64)
    if n_classes < 1:
        raise InvalidInputError(f"n_classes must be >= 1, got {n_classes}")
    if p.shape != g.shape or p.ndim != 1:
        raise InvalidInputError(
            f"pred and gt must be equal-length 1-D arrays, got {p.shape} and {g.shape}"
        )
    keep = g != ignore_label
    bad_p = keep & ((p < 0) | (p >= n_classes) | (p == ignore_label))
    if bad_p.any():
        idx = int(np.flatnonzero(bad_p)[0])
        raise InvalidInputError(
            f"prediction {int(p[idx])} at index {idx} is not a class id in "
            f"[0, {n_classes})"
        )
    bad_g = keep & ((g < 0) | (g >= n_classes))
    if bad_g.any():
        idx = int(np.flatnonzero(bad_g)[0])
        raise InvalidInputError(
            f"ground truth {int(g[idx])} at index {idx} outside [0, {n_classes})"
        )
    flat = g[keep] * n_classes + p[keep]
    counts = np.bincount(flat, minlength=n_classes * n_classes)
    return ConfusionMatrix(counts.reshape(n_classes, n_classes))


def iou_per_class(cm: ConfusionMatrix) -> tuple[np.ndarray, float]:
    """Per-class intersection over union and its mean.

    IoU_i = TP_i / (TP_i + FP_i + FN_i). Classes absent from both
    prediction and ground truth have an empty union; they are reported as
    NaN and excluded from the mean.
    """
    counts = cm.counts
    tp = np.diag(counts).astype(np.float64)
    union = counts.sum(axis=1) + counts.sum(axis=0) - np.diag(counts)
    present = union > 0
    if not present.any():
        raise InvalidInputError("every class is absent; IoU is undefined")
    iou = np.full(cm.num_classes, np.nan)
    iou[present] = tp[present] / union[present]
    return iou, float(iou[present].mean())


def macs_estimate(
    n_points: int, kernel_map_size: float, c_in: int, c_out: int
) -> float:
    """Multiply-accumulate count of one sparse-convolution layer.

    The product of active-site count, average kernel map size, and the two
    channel widths. Sum the per-layer values for a network total.
    """
    for name, value in (
        ("n_points", n_points),
        ("kernel_map_size", kernel_map_size),
        ("c_in", c_in),
        ("c_out", c_out),
    ):
        if not value > 0:
            raise InvalidInputError(f"{name} must be positive, got {value}")
    return float(n_points) * float(kernel_map_size) * float(c_in) * float(c_out)
