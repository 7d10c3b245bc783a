"""Bit-exact binary readers and writers.

Scan files are packed little-endian float32 records (x, y, z, intensity).
Label files hold one little-endian uint32 per point whose low 16 bits are
the semantic class. Feature dumps use a small self-describing container
("PVDF"), and affinity matrices export as binary PGM images.
"""

from __future__ import annotations

import struct

import numpy as np

from .affinity import AffinityMatrix
from .errors import FormatError, InvalidInputError
from .geometry import PointCloud

FEATURE_DUMP_MAGIC = b"PVDF"
FEATURE_DUMP_VERSION = 1
_MAX_DUMP_DIMS = 64

_POINT_RECORD = 16  # four little-endian float32 per point
_LABEL_RECORD = 4
_SEMANTIC_MASK = 0xFFFF


def read_points_bin(data: bytes) -> PointCloud:
    """Decode a packed scan into a point cloud with intensity."""
    if len(data) % _POINT_RECORD != 0:
        offset = len(data) - len(data) % _POINT_RECORD
        raise FormatError(
            f"scan length {len(data)} is not a multiple of {_POINT_RECORD}: "
            f"truncated record at offset {offset}"
        )
    raw = np.frombuffer(data, dtype="<f4").reshape(-1, 4).astype(np.float64)
    finite = np.isfinite(raw).all(axis=1)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise FormatError(f"non-finite value in point record {bad}")
    return PointCloud(positions=raw[:, :3], intensity=raw[:, 3])


def write_points_bin(cloud: PointCloud) -> bytes:
    """Encode a point cloud as packed (x, y, z, intensity) records."""
    n = len(cloud)
    intensity = cloud.intensity
    if intensity is None:
        intensity = np.zeros(n)
    rows = np.column_stack((cloud.positions, intensity))
    if not np.isfinite(rows).all():
        raise InvalidInputError("cannot encode non-finite point values")
    return rows.astype("<f4").tobytes(order="C")


def read_labels_bin(data: bytes, remap: dict[int, int] | None = None) -> np.ndarray:
    """Decode per-point labels; the semantic class is the low 16 bits.

    ``remap`` optionally translates raw semantic ids to train ids; ids
    absent from the table pass through unchanged.
    """
    if len(data) % _LABEL_RECORD != 0:
        offset = len(data) - len(data) % _LABEL_RECORD
        raise FormatError(
            f"label length {len(data)} is not a multiple of {_LABEL_RECORD}: "
            f"truncated record at offset {offset}"
        )
    raw = np.frombuffer(data, dtype="<u4")
    semantic = (raw & _SEMANTIC_MASK).astype(np.int64)
    if remap:
        out = semantic.copy()
        for src, dst in remap.items():
            out[semantic == src] = dst
        return out
    return semantic


def write_labels_bin(
    labels: np.ndarray, instance_ids: np.ndarray | None = None
) -> bytes:
    """Encode labels (and optional instance ids in the high 16 bits)."""
    lab = np.asarray(labels, dtype=np.int64)
    if lab.ndim != 1:
        raise InvalidInputError(f"labels must be 1-D, got shape {lab.shape}")
    if lab.size and (lab.min() < 0 or lab.max() > _SEMANTIC_MASK):
        raise InvalidInputError("labels must fit in 16 bits")
    raw = lab.astype(np.uint32)
    if instance_ids is not None:
        inst = np.asarray(instance_ids, dtype=np.int64)
        if inst.shape != lab.shape:
            raise InvalidInputError("instance_ids must match labels in shape")
        if inst.size and (inst.min() < 0 or inst.max() > _SEMANTIC_MASK):
            raise InvalidInputError("instance ids must fit in 16 bits")
        raw = raw | (inst.astype(np.uint32) << 16)
    return raw.astype("<u4").tobytes()


def encode_feature_dump(array: np.ndarray) -> bytes:
    """Serialize a real array as a PVDF container (float32 payload)."""
    arr = np.asarray(array)
    if not np.issubdtype(arr.dtype, np.number) or np.iscomplexobj(arr):
        raise InvalidInputError(f"cannot encode dtype {arr.dtype}")
    payload = arr.astype("<f4", copy=False)
    if not np.isfinite(payload).all():
        raise InvalidInputError("cannot encode non-finite values")
    header = FEATURE_DUMP_MAGIC + struct.pack(
        "<II", FEATURE_DUMP_VERSION, payload.ndim
    )
    header += struct.pack(f"<{payload.ndim}Q", *payload.shape)
    return header + payload.tobytes(order="C")


def decode_feature_dump(data: bytes) -> np.ndarray:
    """Parse a PVDF container back into a float32 array."""
    if len(data) < 12:
        raise FormatError(f"dump header needs 12 bytes, got {len(data)}")
    if data[:4] != FEATURE_DUMP_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {FEATURE_DUMP_MAGIC!r}")
    version, ndims = struct.unpack("<II", data[4:12])
    if version != FEATURE_DUMP_VERSION:
        raise FormatError(f"unsupported dump version {version}")
    if ndims > _MAX_DUMP_DIMS:
        raise FormatError(f"implausible dimension count {ndims}")
    header_end = 12 + 8 * ndims
    if len(data) < header_end:
        raise FormatError("dump header truncated")
    dims = struct.unpack(f"<{ndims}Q", data[12:header_end])
    expected = 4
    for d in dims:
        expected *= d
    payload = data[header_end:]
    if len(payload) != expected:
        raise FormatError(
            f"payload holds {len(payload)} bytes but dims {dims} require {expected}"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    if not np.isfinite(values).all():
        raise FormatError("dump payload contains non-finite values")
    return values


def write_affinity_pgm(aff: AffinityMatrix) -> bytes:
    """Render an affinity matrix as a binary (P5) PGM image.

    Similarities are mapped from [-1, 1] onto [0, 255] and rounded half
    away from zero, so exports are byte-reproducible.
    """
    n = aff.size
    scaled = 255.0 * (aff.values + 1.0) / 2.0
    pixels = np.floor(scaled + 0.5).astype(np.uint8)
    return b"P5\n%d %d\n255\n" % (n, n) + pixels.tobytes(order="C")
