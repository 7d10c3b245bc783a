"""Cylindrical voxelization of LiDAR point clouds.

Converts Cartesian scans to (radius, angle, height) coordinates, assigns
points to a cylindrical voxel grid, max-pools per-point features into
per-voxel features, and elects a majority label per voxel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

#: Label value marking points that carry no usable class annotation.
DEFAULT_IGNORE_LABEL = 255


@dataclass
class PointCloud:
    """A LiDAR scan: Cartesian positions plus optional intensity and labels.

    Attributes:
        positions: (N, 3) float array of x/y/z in meters.
        intensity: optional (N,) float array of reflectance values.
        labels: optional (N,) integer array of class ids; entries equal to
            the ignore label mark unannotated points.
    """

    positions: np.ndarray
    intensity: np.ndarray | None = None
    labels: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise InvalidInputError(
                f"positions must be (N, 3), got shape {self.positions.shape}"
            )
        finite = np.isfinite(self.positions).all(axis=1)
        if not finite.all():
            bad = int(np.flatnonzero(~finite)[0])
            raise InvalidInputError(f"non-finite coordinate at point index {bad}")
        n = self.positions.shape[0]
        if self.intensity is not None:
            self.intensity = np.asarray(self.intensity, dtype=np.float64)
            if self.intensity.shape != (n,):
                raise InvalidInputError(
                    f"intensity must have shape ({n},), got {self.intensity.shape}"
                )
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (n,):
                raise InvalidInputError(
                    f"labels must have shape ({n},), got {self.labels.shape}"
                )
            if n and self.labels.min() < 0:
                bad = int(np.flatnonzero(self.labels < 0)[0])
                raise InvalidInputError(f"negative label at point index {bad}")

    def __len__(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class CylindricalGridSpec:
    """Cylindrical voxel grid: bin counts and physical extents.

    The angular axis always spans [-pi, pi). Radial and height extents are
    half-open intervals; points outside them are clamped to boundary bins.
    """

    bins: tuple[int, int, int] = (480, 360, 32)
    r_range: tuple[float, float] = (0.0, 50.0)
    z_range: tuple[float, float] = (-4.0, 2.0)

    def __post_init__(self) -> None:
        r_bins, a_bins, h_bins = self.bins
        if min(r_bins, a_bins, h_bins) < 1:
            raise InvalidInputError(f"bin counts must be >= 1, got {self.bins}")
        r_lo, r_hi = self.r_range
        if r_lo < 0 or not r_lo < r_hi:
            raise InvalidInputError(f"need 0 <= r_min < r_max, got {self.r_range}")
        z_lo, z_hi = self.z_range
        if not z_lo < z_hi:
            raise InvalidInputError(f"need z_min < z_max, got {self.z_range}")

    @property
    def widths(self) -> tuple[float, float, float]:
        """Bin width along each axis (meters, radians, meters)."""
        r_bins, a_bins, h_bins = self.bins
        return (
            (self.r_range[1] - self.r_range[0]) / r_bins,
            2.0 * math.pi / a_bins,
            (self.z_range[1] - self.z_range[0]) / h_bins,
        )


@dataclass
class VoxelizedCloud:
    """Per-point voxel assignment plus the set of non-empty voxels.

    ``occupied`` lists each non-empty voxel coordinate exactly once, sorted
    lexicographically by (radial, angular, height) index, so every
    downstream per-voxel array shares one reproducible row order.
    """

    assignment: np.ndarray
    occupied: np.ndarray
    voxel_features: np.ndarray | None = None
    voxel_labels: np.ndarray | None = None
    point_voxel: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.assignment = np.asarray(self.assignment, dtype=np.int64)
        self.occupied = np.asarray(self.occupied, dtype=np.int64)
        if self.assignment.ndim != 2 or self.assignment.shape[1] != 3:
            raise InvalidInputError(
                f"assignment must be (N, 3), got {self.assignment.shape}"
            )
        if self.occupied.ndim != 2 or self.occupied.shape[1] != 3:
            raise InvalidInputError(
                f"occupied must be (M, 3), got {self.occupied.shape}"
            )
        self.point_voxel = _index_into_occupied(self.assignment, self.occupied)
        hits = np.bincount(self.point_voxel, minlength=self.occupied.shape[0])
        if self.occupied.shape[0] and hits.min() == 0:
            raise InvalidInputError("every occupied voxel needs >= 1 assigned point")

    @property
    def num_points(self) -> int:
        return self.assignment.shape[0]

    @property
    def num_voxels(self) -> int:
        return self.occupied.shape[0]


def _index_into_occupied(assignment: np.ndarray, occupied: np.ndarray) -> np.ndarray:
    """Map each assignment triple to its row in ``occupied``.

    Relies on ``occupied`` being lexicographically sorted and exhaustive.
    """
    if assignment.shape[0] == 0:
        if occupied.shape[0] != 0:
            raise InvalidInputError("occupied voxels present but no points assigned")
        return np.zeros(0, dtype=np.int64)
    radix = np.maximum(assignment.max(axis=0), occupied.max(axis=0)) + 1
    lin_occ = (occupied[:, 0] * radix[1] + occupied[:, 1]) * radix[2] + occupied[:, 2]
    lin_pts = (
        assignment[:, 0] * radix[1] + assignment[:, 1]
    ) * radix[2] + assignment[:, 2]
    if np.any(np.diff(lin_occ) <= 0):
        raise InvalidInputError("occupied voxels must be distinct and sorted")
    idx = np.searchsorted(lin_occ, lin_pts)
    if idx.max(initial=-1) >= lin_occ.shape[0] or not np.array_equal(
        lin_occ[np.minimum(idx, lin_occ.shape[0] - 1)], lin_pts
    ):
        raise InvalidInputError("assignment contains a voxel missing from occupied")
    return idx


def to_cylindrical(points: PointCloud) -> np.ndarray:
    """Convert Cartesian positions to (r, angle, z).

    r = sqrt(x^2 + y^2), angle = atan2(y, x) wrapped into [-pi, pi),
    z is passed through unchanged.
    """
    xyz = points.positions
    finite = np.isfinite(xyz).all(axis=1)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise InvalidInputError(f"non-finite coordinate at point index {bad}")
    r = np.hypot(xyz[:, 0], xyz[:, 1])
    a = np.arctan2(xyz[:, 1], xyz[:, 0])
    # atan2 may return exactly +pi (e.g. y = +0.0, x < 0); fold it onto -pi
    # so the angular domain is the half-open interval.
    a[a == math.pi] = -math.pi
    return np.column_stack((r, a, xyz[:, 2]))


def assign_voxels(
    cyl_points: np.ndarray, grid: CylindricalGridSpec
) -> VoxelizedCloud:
    """Bin cylindrical points into the grid and collect non-empty voxels.

    Out-of-range values are clamped into the boundary bins, so every point
    receives a voxel and N is preserved.
    """
    pts = np.asarray(cyl_points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise InvalidInputError(f"cylindrical points must be (N, 3), got {pts.shape}")
    lows = np.array([grid.r_range[0], -math.pi, grid.z_range[0]])
    widths = np.array(grid.widths)
    bins = np.array(grid.bins, dtype=np.int64)
    idx = np.floor((pts - lows) / widths).astype(np.int64)
    np.clip(idx, 0, bins - 1, out=idx)
    occupied = np.unique(idx, axis=0) if idx.shape[0] else np.zeros((0, 3), np.int64)
    return VoxelizedCloud(assignment=idx, occupied=occupied)


def pool_point_to_voxel(point_features: np.ndarray, vox: VoxelizedCloud) -> np.ndarray:
    """Max-pool per-point features into per-voxel features.

    Row m of the result is the channelwise maximum over all points assigned
    to ``vox.occupied[m]``; rows follow the occupied ordering.
    """
    feats = np.asarray(point_features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] != vox.num_points:
        raise InvalidInputError(
            f"expected ({vox.num_points}, C_f) features, got shape {feats.shape}"
        )
    pooled = np.full((vox.num_voxels, feats.shape[1]), -np.inf)
    np.maximum.at(pooled, vox.point_voxel, feats)
    return pooled


def majority_encode(
    labels: np.ndarray,
    vox: VoxelizedCloud,
    ignore_label: int = DEFAULT_IGNORE_LABEL,
) -> np.ndarray:
    """Elect each voxel's label by majority vote over its points.

    Ignore-labeled points do not vote; ties break to the lowest class id;
    a voxel whose points are all ignored keeps the ignore label.
    """
    lab = np.asarray(labels, dtype=np.int64)
    if lab.shape != (vox.num_points,):
        raise InvalidInputError(
            f"expected {vox.num_points} labels, got shape {lab.shape}"
        )
    if vox.num_points and lab.min() < 0:
        raise InvalidInputError("labels must be non-negative class ids")
    voting = lab != ignore_label
    out = np.full(vox.num_voxels, ignore_label, dtype=np.int64)
    if not voting.any():
        return out
    n_classes = int(lab[voting].max()) + 1
    hist = np.zeros((vox.num_voxels, n_classes), dtype=np.int64)
    np.add.at(hist, (vox.point_voxel[voting], lab[voting]), 1)
    counted = hist.sum(axis=1) > 0
    out[counted] = hist[counted].argmax(axis=1)
    return out
