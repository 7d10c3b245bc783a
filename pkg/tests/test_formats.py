import os
import struct

import numpy as np
import pytest

from pvd import (
    AffinityMatrix,
    FormatError,
    InvalidInputError,
    PointCloud,
    PVDError,
    decode_feature_dump,
    encode_feature_dump,
    read_labels_bin,
    read_points_bin,
    write_affinity_pgm,
    write_labels_bin,
    write_points_bin,
)

FIXTURES = os.path.join(os.path.dirname(os.path.abspath(__file__)), "fixtures")


def fixture_bytes(name):
    with open(os.path.join(FIXTURES, name), "rb") as fh:
        return fh.read()


class TestPointsBin:
    def test_single_record(self):
        data = struct.pack("<4f", 1.0, 2.0, 3.0, 0.5)
        cloud = read_points_bin(data)
        np.testing.assert_array_equal(cloud.positions, [[1.0, 2.0, 3.0]])
        np.testing.assert_array_equal(cloud.intensity, [0.5])

    def test_empty_input(self):
        cloud = read_points_bin(b"")
        assert len(cloud) == 0

    def test_trailing_bytes_rejected_with_offset(self):
        with pytest.raises(FormatError, match="offset 16"):
            read_points_bin(b"\x00" * 17)

    def test_nonfinite_rejected(self):
        data = struct.pack("<4f", 1.0, float("nan"), 0.0, 0.0)
        with pytest.raises(FormatError, match="record 0"):
            read_points_bin(data)

    def test_roundtrip(self):
        rng = np.random.default_rng(0)
        cloud = PointCloud(
            rng.normal(size=(20, 3)).astype(np.float32).astype(np.float64),
            intensity=rng.random(20).astype(np.float32).astype(np.float64),
        )
        back = read_points_bin(write_points_bin(cloud))
        np.testing.assert_array_equal(back.positions, cloud.positions)
        np.testing.assert_array_equal(back.intensity, cloud.intensity)


class TestLabelsBin:
    def test_semantic_mask(self):
        assert read_labels_bin(struct.pack("<I", 0x0001_0009)).tolist() == [9]

    def test_zero(self):
        assert read_labels_bin(struct.pack("<I", 0)).tolist() == [0]

    def test_remap(self):
        data = struct.pack("<2I", 9, 12)
        assert read_labels_bin(data, remap={9: 3}).tolist() == [3, 12]

    def test_length_violation(self):
        with pytest.raises(FormatError, match="offset 4"):
            read_labels_bin(b"\x00" * 6)

    def test_roundtrip_with_instances(self):
        labels = np.array([0, 9, 255, 65535])
        inst = np.array([1, 0, 42, 7])
        back = read_labels_bin(write_labels_bin(labels, inst))
        np.testing.assert_array_equal(back, labels)

    def test_encoder_range_checks(self):
        with pytest.raises(InvalidInputError):
            write_labels_bin(np.array([70000]))
        with pytest.raises(InvalidInputError):
            write_labels_bin(np.array([-1]))


class TestFeatureDump:
    def test_roundtrip_bitwise(self):
        rng = np.random.default_rng(1)
        arr = rng.normal(size=(2, 3)).astype(np.float32)
        back = decode_feature_dump(encode_feature_dump(arr))
        assert back.dtype == np.float32
        assert arr.tobytes() == back.tobytes()
        assert back.shape == arr.shape

    def test_scalar_and_3d_shapes(self):
        for arr in (np.float32(4.5), np.zeros((2, 1, 3), dtype=np.float32)):
            back = decode_feature_dump(encode_feature_dump(np.asarray(arr)))
            assert back.shape == np.asarray(arr).shape

    def test_bad_magic(self):
        data = b"XXXX" + encode_feature_dump(np.zeros((1,), np.float32))[4:]
        with pytest.raises(FormatError, match="magic"):
            decode_feature_dump(data)

    def test_bad_version(self):
        good = bytearray(encode_feature_dump(np.zeros((1,), np.float32)))
        good[4] = 9
        with pytest.raises(FormatError, match="version"):
            decode_feature_dump(bytes(good))

    def test_dims_payload_mismatch(self):
        header = b"PVDF" + struct.pack("<II", 1, 2) + struct.pack("<2Q", 1000, 1000)
        with pytest.raises(FormatError, match="require"):
            decode_feature_dump(header + b"\x00" * 8)

    def test_truncated_header(self):
        with pytest.raises(FormatError):
            decode_feature_dump(b"PVDF\x01\x00")
        with pytest.raises(FormatError, match="truncated"):
            decode_feature_dump(b"PVDF" + struct.pack("<II", 1, 3) + b"\x00" * 4)

    def test_nonfinite_payload_rejected(self):
        data = b"PVDF" + struct.pack("<II", 1, 1) + struct.pack("<Q", 1)
        data += struct.pack("<f", float("inf"))
        with pytest.raises(FormatError, match="non-finite"):
            decode_feature_dump(data)

    def test_encoder_rejects_nonfinite(self):
        with pytest.raises(InvalidInputError):
            encode_feature_dump(np.array([np.nan], dtype=np.float32))


class TestAffinityPgm:
    def test_self_similarity_pixel(self):
        data = write_affinity_pgm(AffinityMatrix(np.array([[1.0]])))
        assert data == b"P5\n1 1\n255\n\xff"

    def test_opposite_pixel(self):
        data = write_affinity_pgm(AffinityMatrix(np.array([[-1.0]])))
        assert data.endswith(b"\x00")

    def test_zero_rounds_half_away_from_zero(self):
        data = write_affinity_pgm(AffinityMatrix(np.array([[0.0]])))
        assert data.endswith(bytes([128]))

    def test_layout(self):
        mat = AffinityMatrix(np.array([[1.0, 0.0], [0.0, 1.0]]))
        data = write_affinity_pgm(mat)
        assert data == b"P5\n2 2\n255\n" + bytes([255, 128, 128, 255])


class TestGoldenFixtures:
    def test_scan_fixture(self):
        cloud = read_points_bin(fixture_bytes("mini.bin"))
        np.testing.assert_array_equal(
            cloud.positions, [[1, 2, 3], [-4, 0, 1], [0, -2, -1]]
        )
        np.testing.assert_array_equal(cloud.intensity, [0.5, 0.25, 1.0])

    def test_label_fixture(self):
        labels = read_labels_bin(fixture_bytes("mini.label"))
        np.testing.assert_array_equal(labels, [9, 0, 255])

    def test_dump_fixture(self):
        arr = decode_feature_dump(fixture_bytes("block.pvdf"))
        np.testing.assert_array_equal(
            arr, np.array([[1.5, -2.25, 0.5], [0.0, 1.0, 3.75]], np.float32)
        )

    def test_pgm_fixture_matches_encoder(self):
        feats = np.array([[1.0, 0.0], [1.0, 1.0]])
        from pvd import FeatureBlock, cosine_affinity

        aff = cosine_affinity(FeatureBlock(feats, np.array([True, True]), [0, 1]))
        assert write_affinity_pgm(aff) == fixture_bytes("affinity.pgm")
        assert fixture_bytes("affinity.pgm") == b"P5\n2 2\n255\n" + bytes(
            [255, 218, 218, 255]
        )


class TestFuzz:
    @pytest.mark.parametrize(
        "name,decoder",
        [
            ("mini.bin", read_points_bin),
            ("mini.label", read_labels_bin),
            ("block.pvdf", decode_feature_dump),
        ],
    )
    def test_mutations_never_crash(self, name, decoder):
        base = bytearray(fixture_bytes(name))
        rng = np.random.default_rng(hash(name) % (2**32))
        for _ in range(300):
            data = bytearray(base)
            op = rng.integers(0, 3)
            if op == 0 and len(data):
                data[rng.integers(0, len(data))] = int(rng.integers(0, 256))
            elif op == 1:
                data = data[: rng.integers(0, len(data) + 1)]
            else:
                data += bytes(rng.integers(0, 256, size=rng.integers(1, 9)).tolist())
            try:
                decoder(bytes(data))
            except PVDError:
                pass
