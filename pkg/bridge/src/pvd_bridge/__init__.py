"""Flat-array boundary over the distillation kernels.

An external training loop that keeps its tensors as contiguous row-major
buffers can evaluate the output-distillation and affinity-distillation
losses (with gradients) through two entry points, without adopting the
library's domain types. The bridge adds no arithmetic of its own: results
are bitwise identical to calling the underlying kernels directly.

Every call returns ``(loss, grad, status)``. On failure the status code is
nonzero, its message says why, and no partial outputs are handed back
(``loss`` is 0.0 and ``grad`` is None). The caller owns all buffers; the
bridge never retains references past the call.

The boundary is semantically versioned; see :func:`bridge_version` and
:data:`SYMBOLS`.
"""

from .bridge import (
    CODE_INTERNAL_ERROR,
    CODE_INVALID_ARGUMENT,
    CODE_OK,
    CODE_SHAPE_MISMATCH,
    SYMBOLS,
    BridgeStatus,
    bridge_affinity_loss,
    bridge_kl_loss,
    bridge_version,
)

__all__ = [
    "BridgeStatus",
    "CODE_INTERNAL_ERROR",
    "CODE_INVALID_ARGUMENT",
    "CODE_OK",
    "CODE_SHAPE_MISMATCH",
    "SYMBOLS",
    "bridge_affinity_loss",
    "bridge_kl_loss",
    "bridge_version",
]
