"""Scan ingestion, rigid transforms, uniform sampling and radius queries."""

import logging
import struct

import numpy as np
import pytest

from Classes.Base.CustomExceptionClass import (
    InvalidTransform, NonFiniteValue, NonPositiveRadius, ParseError, ScanFileNotFound, TruncatedRecord,
)
from Classes.Cloud.PointCloudClass import (
    PointCloud, apply_transform, load_kitti_bin, load_scan, load_xyzi_text, radius_neighbors, save_kitti_bin,
    uniform_sample,
)
from Classes.Cloud.RigidTransformClass import RigidTransform, read_pose_file, write_pose_file


def _kitti_bytes(*records):
    return b"".join(struct.pack("<4f", *r) for r in records)


class TestKittiReader:

    def test_two_records_in_order(self, tmp_path):
        path = tmp_path / "scan.bin"
        path.write_bytes(_kitti_bytes((1, 2, 3, 0.5), (4, 5, 6, 0.9)))
        cloud = load_kitti_bin(path)
        assert len(cloud) == 2
        np.testing.assert_allclose(cloud.xyz, [[1, 2, 3], [4, 5, 6]])
        np.testing.assert_allclose(cloud.intensity, [0.5, 0.9], atol=1e-7)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.bin"
        path.write_bytes(b"")
        assert len(load_kitti_bin(path)) == 0

    def test_truncated_record(self, tmp_path):
        path = tmp_path / "short.bin"
        path.write_bytes(b"\x00" * 17)
        with pytest.raises(TruncatedRecord) as err:
            load_kitti_bin(path)
        assert err.value.exit_code == 2

    def test_non_finite(self, tmp_path):
        path = tmp_path / "nan.bin"
        path.write_bytes(_kitti_bytes((0, 0, 0, 0.1), (float("nan"), 0, 0, 0.1)))
        with pytest.raises(NonFiniteValue):
            load_kitti_bin(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ScanFileNotFound):
            load_scan(tmp_path / "absent.bin")

    def test_reflectance_clamped_with_warning(self, tmp_path, caplog):
        path = tmp_path / "bright.bin"
        path.write_bytes(_kitti_bytes((0, 0, 0, 1.5), (1, 0, 0, -0.2)))
        with caplog.at_level(logging.WARNING):
            cloud = load_kitti_bin(path)
        np.testing.assert_array_equal(cloud.intensity, [1.0, 0.0])
        assert "Clamped 2" in caplog.text

    def test_save_then_load(self, tmp_path):
        cloud = PointCloud([[1.5, -2.0, 0.25]], [0.75])
        save_kitti_bin(cloud, tmp_path / "out" / "a.bin")
        loaded = load_scan(tmp_path / "out" / "a.bin")
        np.testing.assert_array_equal(loaded.xyz, cloud.xyz)
        np.testing.assert_array_equal(loaded.intensity, cloud.intensity)

    def test_load_then_save_is_byte_identical(self, tmp_path):
        rng = np.random.default_rng(9)
        records = np.c_[rng.normal(scale=20.0, size=(64, 3)), rng.uniform(0, 1, size=64)].astype("<f4")
        source = tmp_path / "source.bin"
        source.write_bytes(records.tobytes())
        save_kitti_bin(load_kitti_bin(source), tmp_path / "copy.bin")
        assert (tmp_path / "copy.bin").read_bytes() == source.read_bytes()


class TestTextReader:

    def test_single_point(self, tmp_path):
        path = tmp_path / "scan.txt"
        path.write_text("0 0 0 1.0\n")
        cloud = load_xyzi_text(path)
        assert cloud.points[0] == (0.0, 0.0, 0.0, 1.0)

    def test_comments_only(self, tmp_path):
        path = tmp_path / "scan.txt"
        path.write_text("# header\n\n# nothing else\n")
        assert len(load_xyzi_text(path)) == 0

    def test_comma_separated(self, tmp_path):
        path = tmp_path / "scan.xyz"
        path.write_text("1,2,3,0.5\n4, 5, 6, 0.25\n")
        np.testing.assert_allclose(load_scan(path).xyz, [[1, 2, 3], [4, 5, 6]])

    def test_parse_error_names_the_line(self, tmp_path):
        path = tmp_path / "scan.txt"
        path.write_text("a b c d\n")
        with pytest.raises(ParseError) as err:
            load_xyzi_text(path)
        assert err.value.line_number == 1
        assert err.value.message.startswith("line 1:")

    def test_wrong_field_count(self, tmp_path):
        path = tmp_path / "scan.txt"
        path.write_text("0 0 0 1\n1 2 3\n")
        with pytest.raises(ParseError) as err:
            load_xyzi_text(path)
        assert err.value.line_number == 2

    def test_undecodable_bytes_are_a_parse_error(self, tmp_path):
        path = tmp_path / "scan.txt"
        path.write_bytes(b"1 2 3 0.5\n\xff\xfe 1 2 3\n")
        with pytest.raises(ParseError) as err:
            load_xyzi_text(path)
        assert err.value.line_number == 2
        assert err.value.exit_code == 2


class TestRigidTransform:

    def test_identity_is_bit_exact(self):
        cloud = PointCloud(np.random.default_rng(0).normal(size=(20, 3)), np.linspace(0, 1, 20))
        moved = apply_transform(cloud, RigidTransform.identity())
        np.testing.assert_array_equal(moved.xyz, cloud.xyz)
        assert moved is not cloud

    def test_pure_translation(self):
        cloud = PointCloud([[0.0, 0.0, 0.0]])
        moved = apply_transform(cloud, RigidTransform(np.eye(3), (1.0, 0.0, 0.0)))
        np.testing.assert_array_equal(moved.xyz, [[1.0, 0.0, 0.0]])
        np.testing.assert_array_equal(moved.sensor_origin, [1.0, 0.0, 0.0])

    def test_quarter_turn_about_z(self):
        T = RigidTransform.from_axis_angle((0, 0, 1), np.pi / 2)
        np.testing.assert_allclose(T.apply([[1.0, 0.0, 0.0]]), [[0.0, 1.0, 0.0]], atol=1e-12)

    def test_rejects_non_orthonormal(self):
        with pytest.raises(InvalidTransform):
            apply_transform(PointCloud([[0, 0, 0]]), RigidTransform(2 * np.eye(3), np.zeros(3)))

    def test_inverse_and_compose(self):
        T = RigidTransform.from_axis_angle((1, 2, 3), 0.7, (0.5, -1.0, 2.0))
        round_trip = T.inverse().compose(T)
        np.testing.assert_allclose(round_trip.rotation, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(round_trip.translation, np.zeros(3), atol=1e-12)

    def test_inverse_recovers_the_cloud(self):
        rng = np.random.default_rng(8)
        cloud = PointCloud(rng.normal(size=(200, 3)), rng.uniform(0, 1, 200), sensor_origin=(0.5, -1.0, 1.8))
        T = RigidTransform.from_axis_angle((0.3, -1, 2), 1.1, (4.0, -2.0, 0.5))
        back = apply_transform(apply_transform(cloud, T), T.inverse())
        np.testing.assert_allclose(back.xyz, cloud.xyz, atol=1e-12)
        np.testing.assert_allclose(back.sensor_origin, cloud.sensor_origin, atol=1e-12)
        np.testing.assert_allclose(back.sensor_up, cloud.sensor_up, atol=1e-12)
        np.testing.assert_array_equal(back.intensity, cloud.intensity)


class TestPoseFile:

    def test_write_then_read(self, tmp_path):
        poses = {0: RigidTransform.identity(), 1: RigidTransform.from_axis_angle((0, 0, 1), 0.1, (0.3, 0.0, 0.0))}
        write_pose_file(tmp_path / "poses.txt", poses)
        loaded = read_pose_file(tmp_path / "poses.txt")
        assert sorted(loaded) == [0, 1]
        np.testing.assert_array_equal(loaded[1].as_matrix(), poses[1].as_matrix())

    def test_limited_precision_is_repaired(self, tmp_path):
        R = RigidTransform.from_axis_angle((0, 0, 1), 0.3).rotation
        values = " ".join(f"{v:.6f}" for v in np.c_[R, [1, 2, 3]].reshape(-1))
        (tmp_path / "poses.txt").write_text(f"0 {values}\n")
        pose = read_pose_file(tmp_path / "poses.txt")[0]
        pose.validate()

    def test_duplicate_frame(self, tmp_path):
        row = "0 1 0 0 0 0 1 0 0 0 0 1 0\n"
        (tmp_path / "poses.txt").write_text(row + row)
        with pytest.raises(ParseError) as err:
            read_pose_file(tmp_path / "poses.txt")
        assert err.value.line_number == 2

    def test_ragged_row(self, tmp_path):
        row = "0 1 0 0 0 0 1 0 0 0 0 1 0"
        (tmp_path / "poses.txt").write_text(f"{row}\n{row} 7 8\n")
        with pytest.raises(ParseError) as err:
            read_pose_file(tmp_path / "poses.txt")
        assert err.value.line_number == 2
        assert err.value.exit_code == 2

    def test_undecodable_bytes(self, tmp_path):
        row = b"0 1 0 0 0 0 1 0 0 0 0 1 0\n"
        (tmp_path / "poses.txt").write_bytes(row + b"1 \xff\xfe 0 0 0 1 0 0 0 0 1 0\n")
        with pytest.raises(ParseError) as err:
            read_pose_file(tmp_path / "poses.txt")
        assert err.value.line_number == 2

    def test_missing(self, tmp_path):
        with pytest.raises(ScanFileNotFound):
            read_pose_file(tmp_path / "poses.txt")


def _cell_oracle(xyz, radius):
    """Brute-force: for every occupied cell, the point closest to its center."""
    origin = xyz.min(axis=0)
    best = {}
    for i, p in enumerate(xyz):
        cell = tuple(np.floor((p - origin) / radius).astype(int))
        center = origin + (np.array(cell) + 0.5) * radius
        d2 = float(np.sum((p - center) ** 2))
        if cell not in best or d2 < best[cell][0]:
            best[cell] = (d2, i)
    return sorted(i for _, i in best.values())


class TestUniformSample:

    def test_empty_cloud(self):
        assert uniform_sample(PointCloud(), 0.4) == []

    def test_large_radius_gives_one_keypoint(self):
        xyz = np.random.default_rng(1).uniform(-1, 1, size=(100, 3))
        assert len(uniform_sample(PointCloud(xyz), 10.0)) == 1

    def test_cube_corners(self):
        corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=float)
        keypoints = uniform_sample(PointCloud(corners), 0.5)
        assert len(keypoints) == 8
        assert [kp.source_index for kp in keypoints] == _cell_oracle(corners, 0.5)

    def test_matches_cell_oracle(self):
        xyz = np.random.default_rng(2).uniform(0, 5, size=(2000, 3))
        keypoints = uniform_sample(PointCloud(xyz, frame_id=3), 0.7)
        assert [kp.source_index for kp in keypoints] == _cell_oracle(xyz, 0.7)
        assert all(kp.frame_id == 3 for kp in keypoints)

    def test_keypoints_are_cloud_points(self):
        xyz = np.random.default_rng(3).normal(size=(300, 3))
        for kp in uniform_sample(PointCloud(xyz), 0.5):
            np.testing.assert_array_equal(kp.position, xyz[kp.source_index])

    def test_non_positive_radius(self):
        with pytest.raises(NonPositiveRadius):
            uniform_sample(PointCloud([[0, 0, 0]]), 0.0)


class TestRadiusNeighbors:

    def test_tiny_radius_finds_only_center(self):
        xyz = np.random.default_rng(4).normal(size=(50, 3))
        assert radius_neighbors(PointCloud(xyz), xyz[17], 1e-6) == [17]

    def test_huge_radius_finds_everything(self):
        xyz = np.random.default_rng(5).normal(size=(40, 3))
        assert radius_neighbors(PointCloud(xyz), (0, 0, 0), 1e3) == list(range(40))

    def test_matches_linear_scan(self):
        rng = np.random.default_rng(6)
        xyz = rng.uniform(-2, 2, size=(1000, 3))
        cloud = PointCloud(xyz)
        for center in rng.uniform(-2, 2, size=(10, 3)):
            expected = [i for i in range(len(xyz)) if np.linalg.norm(xyz[i] - center) <= 0.8]
            assert radius_neighbors(cloud, center, 0.8) == expected

    def test_empty_cloud(self):
        assert radius_neighbors(PointCloud(), (0, 0, 0), 1.0) == []

    def test_non_positive_radius(self):
        with pytest.raises(NonPositiveRadius):
            radius_neighbors(PointCloud([[0, 0, 0]]), (0, 0, 0), -1.0)
