"""Regenerate the committed binary fixtures.

Run from the repository root:

    python tests/fixtures/regen.py

The expected values frozen into the test suite correspond to exactly these
bytes; regenerate only when a format intentionally changes.
"""

import os
import struct

import numpy as np

from pvd import FeatureBlock, cosine_affinity, encode_feature_dump, write_affinity_pgm

HERE = os.path.dirname(os.path.abspath(__file__))


def main() -> None:
    # Three scan records: x, y, z, intensity as little-endian float32.
    points = [
        (1.0, 2.0, 3.0, 0.5),
        (-4.0, 0.0, 1.0, 0.25),
        (0.0, -2.0, -1.0, 1.0),
    ]
    with open(os.path.join(HERE, "mini.bin"), "wb") as fh:
        for rec in points:
            fh.write(struct.pack("<4f", *rec))

    # Matching labels: semantic class in the low 16 bits, instance id above.
    raw_labels = [0x0001_0009, 0x0000_0000, 0x002A_00FF]
    with open(os.path.join(HERE, "mini.label"), "wb") as fh:
        for value in raw_labels:
            fh.write(struct.pack("<I", value))

    # A 2x3 feature dump with exactly float32-representable values.
    block = np.array([[1.5, -2.25, 0.5], [0.0, 1.0, 3.75]], dtype=np.float32)
    with open(os.path.join(HERE, "block.pvdf"), "wb") as fh:
        fh.write(encode_feature_dump(block))

    # Golden affinity image for two valid rows with cosine 1/sqrt(2).
    feats = np.array([[1.0, 0.0], [1.0, 1.0]])
    aff = cosine_affinity(FeatureBlock(feats, np.array([True, True]), [0, 1]))
    with open(os.path.join(HERE, "affinity.pgm"), "wb") as fh:
        fh.write(write_affinity_pgm(aff))


if __name__ == "__main__":
    main()
