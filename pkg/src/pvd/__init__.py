"""Deterministic point-to-voxel distillation kernels for LiDAR segmentation.

The package covers the numeric core of distilling a compact LiDAR
segmentation student from a larger teacher: cylindrical voxelization,
difficulty-aware supervoxel sampling, pairwise-affinity construction, the
output- and affinity-distillation losses with analytic gradients, IoU
evaluation, and the binary file formats tying them together.
"""

from .affinity import (
    NORM_EPSILON,
    AffinityMatrix,
    FeatureBlock,
    affinity_distill_grad,
    affinity_distill_loss,
    cosine_affinity,
    select_and_pad,
)
from .config import Config, load_config, load_config_file
from .errors import ConfigError, FormatError, InvalidInputError, PVDError
from .formats import (
    decode_feature_dump,
    encode_feature_dump,
    read_labels_bin,
    read_points_bin,
    write_affinity_pgm,
    write_labels_bin,
    write_points_bin,
)
from .geometry import (
    DEFAULT_IGNORE_LABEL,
    CylindricalGridSpec,
    PointCloud,
    VoxelizedCloud,
    assign_voxels,
    majority_encode,
    pool_point_to_voxel,
    to_cylindrical,
)
from .losses import (
    KL_LITERAL,
    KL_TEACHER_TO_STUDENT,
    LogitsTensor,
    LossBreakdown,
    LossWeights,
    combined_loss,
    kl_output_grad,
    kl_output_loss,
    softmax_probs,
    weighted_cross_entropy,
)
from .metrics import ConfusionMatrix, confusion_matrix, iou_per_class, macs_estimate
from .sampling import (
    SamplerConfig,
    SupervoxelSpec,
    SupervoxelWeights,
    class_frequency_weight,
    minority_classes,
    sample_supervoxels,
    supervoxel_count,
    supervoxel_index_of,
    supervoxel_weights,
)

__version__ = "0.1.0"

__all__ = [
    "AffinityMatrix",
    "Config",
    "ConfigError",
    "ConfusionMatrix",
    "CylindricalGridSpec",
    "DEFAULT_IGNORE_LABEL",
    "FeatureBlock",
    "FormatError",
    "InvalidInputError",
    "KL_LITERAL",
    "KL_TEACHER_TO_STUDENT",
    "LogitsTensor",
    "LossBreakdown",
    "LossWeights",
    "NORM_EPSILON",
    "PVDError",
    "PointCloud",
    "SamplerConfig",
    "SupervoxelSpec",
    "SupervoxelWeights",
    "VoxelizedCloud",
    "affinity_distill_grad",
    "affinity_distill_loss",
    "assign_voxels",
    "class_frequency_weight",
    "combined_loss",
    "confusion_matrix",
    "cosine_affinity",
    "decode_feature_dump",
    "encode_feature_dump",
    "iou_per_class",
    "kl_output_grad",
    "kl_output_loss",
    "load_config",
    "load_config_file",
    "macs_estimate",
    "majority_encode",
    "minority_classes",
    "pool_point_to_voxel",
    "read_labels_bin",
    "read_points_bin",
    "sample_supervoxels",
    "select_and_pad",
    "softmax_probs",
    "supervoxel_count",
    "supervoxel_index_of",
    "supervoxel_weights",
    "to_cylindrical",
    "weighted_cross_entropy",
    "write_affinity_pgm",
    "write_labels_bin",
    "write_points_bin",
]
