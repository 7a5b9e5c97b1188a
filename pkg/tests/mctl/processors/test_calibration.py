"""Tests for wand recognition and pose registration."""

import math
import os
import tempfile
import unittest

import numpy as np

from mctl.processors.calibration import (
    WandCalibrationProcessor,
    WandConfig,
    binarization_sequence,
    calibrate_sensor,
    load_calibration_records,
    localize_wand,
    parse_calibration_record,
    register_pose,
    save_calibration_records,
    standardize_depth,
    summarize_samples,
    validate_samples,
)
from mctl.sim.depth import render_sphere, render_wand_depth
from mctl.utils.errors import (
    CalibrationError,
    CalibrationFrameRejected,
    TrajectoryTooShort,
    WandNotFound,
)
from mctl.utils.geometry import normalize_angle
from mctl.utils.models import (
    DEPTH_HEIGHT,
    DEPTH_WIDTH,
    CalibrationRecord,
    DepthFrame,
    Pixel,
    Point3,
    SensorPose,
    WandDetection,
)


PLACEMENT_CM = 30.0


def detection_at(x: float, y: float, z: float) -> WandDetection:
    return WandDetection(
        bbox_ul=Pixel(u=100, v=100),
        bbox_br=Pixel(u=110, v=110),
        center_pixel=Pixel(u=105, v=105),
        center_point=Point3(x=x, y=y, z=z),
        radius_cm=5.0,
    )


def background(depth: float = 650.0) -> np.ndarray:
    return np.full((DEPTH_HEIGHT, DEPTH_WIDTH), depth)


def random_pose(rng: np.random.Generator) -> SensorPose:
    z = float(rng.uniform(150.0, 280.0))
    x, y = rng.uniform(-0.15 * z, 0.15 * z, size=2)
    theta = normalize_angle(float(rng.uniform(-math.pi, math.pi)))
    return SensorPose(origin_in_client=Point3(x=float(x), y=float(y), z=z), yaw_theta=theta)


def placement_frames(pose: SensorPose, noise_cm: float, rng: np.random.Generator, count: int = 3):
    first = [
        render_wand_depth(Point3(x=0.0, y=0.0, z=0.0), pose, noise_cm=noise_cm, rng=rng)
        for _ in range(count)
    ]
    second = [
        render_wand_depth(Point3(x=0.0, y=PLACEMENT_CM, z=0.0), pose, noise_cm=noise_cm, rng=rng)
        for _ in range(count)
    ]
    return first, second


def angle_error(a: float, b: float) -> float:
    return abs(normalize_angle(a - b))


class TestSegmentation(unittest.TestCase):
    """Test cases for depth standardization and thresholding."""

    def test_standardize_depth(self) -> None:
        samples = background(300.0)
        samples[0, 0] = 0.0
        samples[0, 1] = 10.0
        samples[0, 2] = 700.0
        frame = standardize_depth(DepthFrame(samples=samples, frame_timestamp=4))
        self.assertEqual(frame.samples[0, 0], 650.0)
        self.assertEqual(frame.samples[0, 1], 50.0)
        self.assertEqual(frame.samples[0, 2], 650.0)
        self.assertEqual(frame.samples[5, 5], 300.0)
        self.assertEqual(frame.frame_timestamp, 4)

    def test_single_iteration_for_clean_disk(self) -> None:
        samples = background(600.0)
        vs, us = np.ogrid[:DEPTH_HEIGHT, :DEPTH_WIDTH]
        disk = (us - 256) ** 2 + (vs - 212) ** 2 <= 15**2
        samples[disk] = 200.0
        sequence = binarization_sequence(samples)
        self.assertEqual(len(sequence), 1)
        np.testing.assert_array_equal(sequence[-1], disk)

    def test_layered_scene_shrinks_each_iteration(self) -> None:
        samples = background(640.0)
        samples[50:200, 50:250] = 260.0
        samples[250:270, 300:400] = 120.0
        samples[300:310, 450:460] = 50.0
        sequence = binarization_sequence(samples)
        self.assertEqual(len(sequence), 3)
        self.assertEqual([int(labels.sum()) for labels in sequence], [32100, 2100, 100])
        for previous, current in zip(sequence, sequence[1:]):
            self.assertEqual(int((current & ~previous).sum()), 0)
        self.assertTrue(sequence[-1][300:310, 450:460].all())

    def test_noisy_scene_labels_are_nested(self) -> None:
        rng = np.random.default_rng(8)
        samples = background(640.0)
        samples[50:200, 50:250] = 260.0
        samples[250:270, 300:400] = 120.0
        samples[300:310, 450:460] = 50.0
        samples = samples + rng.normal(0.0, 2.0, size=samples.shape)
        for c_offset in (0.3, 0.5025, 0.7, 0.9):
            sequence = binarization_sequence(samples, c_offset=c_offset)
            self.assertGreaterEqual(len(sequence), 1)
            for previous, current in zip(sequence, sequence[1:]):
                self.assertEqual(int((current & ~previous).sum()), 0)

    def test_empty_scene(self) -> None:
        with self.assertRaises(WandNotFound):
            localize_wand(DepthFrame(samples=background()))


class TestLocalizeWand(unittest.TestCase):
    """Test cases for locating the wand center."""

    def test_rendered_sphere(self) -> None:
        center = Point3(x=20.0, y=-10.0, z=200.0)
        detection = localize_wand(DepthFrame(samples=render_sphere(center, 5.0)))
        self.assertLess(detection.center_point.distance_to(center), 0.1)
        self.assertAlmostEqual(detection.radius_cm, 5.0, delta=1.0)
        self.assertFalse(detection.partial)

    def test_silhouette_estimate_without_refinement(self) -> None:
        center = Point3(x=0.0, y=0.0, z=180.0)
        detection = localize_wand(DepthFrame(samples=render_sphere(center, 5.0)), refine=False)
        self.assertLess(detection.center_point.distance_to(center), 2.0)


class TestSampleValidation(unittest.TestCase):
    """Test cases for validating repeated captures."""

    def test_consistent_samples(self) -> None:
        detections = [detection_at(0.0, 0.0, 200.0 + dz) for dz in (-0.5, 0.0, 0.5)]
        summary = summarize_samples(detections)
        self.assertEqual(summary.kept, 3)
        self.assertAlmostEqual(summary.detection.center_point.z, 200.0)
        self.assertAlmostEqual(summary.spread_cm, 0.5)

    def test_outlier_dropped(self) -> None:
        detections = [detection_at(0.0, 0.0, 200.0 + dz) for dz in (-0.5, 0.0, 0.5)]
        detections.append(detection_at(0.0, 0.0, 230.0))
        summary = summarize_samples(detections)
        self.assertEqual(summary.kept, 3)
        self.assertAlmostEqual(validate_samples(detections).center_point.z, 200.0)

    def test_rejected(self) -> None:
        with self.assertRaises(CalibrationFrameRejected):
            summarize_samples([detection_at(0.0, 0.0, 200.0)])
        with self.assertRaises(CalibrationFrameRejected):
            summarize_samples([detection_at(0.0, 0.0, 200.0), detection_at(0.0, 0.0, 220.0)])


class TestRegisterPose(unittest.TestCase):
    """Test cases for two-placement registration."""

    def test_trajectory_along_client_y(self) -> None:
        pose = register_pose(detection_at(0.0, 0.0, 200.0), detection_at(0.0, 30.0, 200.0))
        self.assertAlmostEqual(pose.yaw_theta, 0.0)
        self.assertEqual(pose.origin_in_client, Point3(x=0.0, y=0.0, z=200.0))

    def test_trajectory_along_client_x(self) -> None:
        pose = register_pose(detection_at(0.0, 0.0, 200.0), detection_at(30.0, 0.0, 200.0))
        self.assertAlmostEqual(pose.yaw_theta, math.pi / 2.0)

    def test_trajectory_too_short(self) -> None:
        with self.assertRaises(TrajectoryTooShort):
            register_pose(detection_at(0.0, 0.0, 200.0), detection_at(5.0, 0.0, 240.0))


class TestCalibrationRecords(unittest.TestCase):
    """Test cases for the records file."""

    def setUp(self) -> None:
        self.tmpdir = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmpdir.name, "calibration.txt")

    def tearDown(self) -> None:
        self.tmpdir.cleanup()

    def test_save_and_load(self) -> None:
        records = [
            CalibrationRecord(
                sensor_id=sensor_id,
                pose=SensorPose(
                    origin_in_client=Point3(x=1.0 / 3.0, y=-2.5, z=210.0 + sensor_id),
                    yaw_theta=0.1 * sensor_id,
                ),
                sample_count=10,
                residual_spread=0.25,
            )
            for sensor_id in (2, 1)
        ]
        save_calibration_records(self.path, records)
        with open(self.path, "a", encoding="utf-8") as f:
            f.write("\n# trailing comment\n")

        loaded = load_calibration_records(self.path)
        self.assertEqual(sorted(loaded), [1, 2])
        self.assertEqual(loaded[2], records[0])
        self.assertEqual(loaded[1].pose.origin_in_client.x, 1.0 / 3.0)

    def test_malformed_lines(self) -> None:
        with self.assertRaises(CalibrationError):
            parse_calibration_record("1 0.0 0.0 0.0 200.0 10")
        with self.assertRaises(CalibrationError):
            parse_calibration_record("1 yaw 0.0 0.0 200.0 10 0.1")
        with self.assertRaises(CalibrationError):
            parse_calibration_record("1 9.0 0.0 0.0 200.0 10 0.1")


class TestWandCalibrationProcessor(unittest.TestCase):
    """Test cases for end-to-end sensor calibration."""

    def test_skips_frames_without_wand(self) -> None:
        pose = SensorPose(origin_in_client=Point3(x=0.0, y=0.0, z=200.0), yaw_theta=0.0)
        frames = [render_wand_depth(Point3(x=0.0, y=0.0, z=0.0), pose) for _ in range(3)]
        frames.insert(1, DepthFrame(samples=background()))
        summary = WandCalibrationProcessor().process(frames)
        self.assertEqual(summary.kept, 3)

    def test_recovers_poses_without_noise(self) -> None:
        rng = np.random.default_rng(21)
        for _ in range(20):
            truth = random_pose(rng)
            first, second = placement_frames(truth, 0.0, rng)
            record = calibrate_sensor(first, second, sensor_id=1)
            self.assertLess(angle_error(record.pose.yaw_theta, truth.yaw_theta), 1e-3)
            self.assertLess(
                record.pose.origin_in_client.distance_to(truth.origin_in_client), 1.0
            )
            self.assertEqual(record.sample_count, 6)

    def test_recovers_poses_with_noise(self) -> None:
        rng = np.random.default_rng(22)
        poses = 50 if os.environ.get("MCTL_ACCEPTANCE") else 10
        errors = []
        for _ in range(poses):
            truth = random_pose(rng)
            first, second = placement_frames(truth, 0.5, rng)
            record = calibrate_sensor(first, second, sensor_id=1, config=WandConfig())
            errors.append(record.pose.origin_in_client.distance_to(truth.origin_in_client))
        self.assertLess(float(np.mean(errors)), 2.0)


if __name__ == "__main__":
    unittest.main()
