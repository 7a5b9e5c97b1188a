"""Tests for data models."""

import math
import unittest

import numpy as np
from pydantic import ValidationError

from mctl.utils.errors import DomainError
from mctl.utils.models import (
    DEPTH_HEIGHT,
    DEPTH_WIDTH,
    SKELETONS,
    DepthFrame,
    FusedJoint,
    Initializer,
    JointObservation,
    ObservationFrame,
    OcclusionReport,
    Pixel,
    Point3,
    SensorPose,
    Skeleton,
    SyncExchange,
    SyncState,
    TrackingState,
    WandDetection,
    get_skeleton,
)


class TestPoint3(unittest.TestCase):
    """Test cases for Point3."""

    def test_distance(self) -> None:
        a = Point3(x=0.0, y=0.0, z=0.0)
        b = Point3(x=3.0, y=4.0, z=12.0)
        self.assertAlmostEqual(a.distance_to(b), 13.0)

    def test_rejects_non_finite(self) -> None:
        with self.assertRaises(ValidationError):
            Point3(x=float("nan"), y=0.0, z=0.0)
        with self.assertRaises(ValidationError):
            Point3(x=0.0, y=float("inf"), z=0.0)

    def test_array_conversion(self) -> None:
        point = Point3.from_array(np.array([1.5, -2.0, 3.25]))
        np.testing.assert_array_equal(point.to_array(), [1.5, -2.0, 3.25])


class TestPixelAndDepthFrame(unittest.TestCase):
    """Test cases for Pixel and DepthFrame."""

    def test_pixel_bounds(self) -> None:
        Pixel(u=DEPTH_WIDTH - 1, v=DEPTH_HEIGHT - 1)
        with self.assertRaises(ValidationError):
            Pixel(u=DEPTH_WIDTH, v=0)
        with self.assertRaises(ValidationError):
            Pixel(u=0, v=-1)

    def test_depth_frame_shape(self) -> None:
        with self.assertRaises(ValidationError):
            DepthFrame(samples=np.zeros((10, 10)))

    def test_depth_frame_rejects_negative(self) -> None:
        samples = np.full((DEPTH_HEIGHT, DEPTH_WIDTH), 100.0)
        samples[0, 0] = -1.0
        with self.assertRaises(ValidationError):
            DepthFrame(samples=samples)

    def test_depth_frame_is_read_only(self) -> None:
        frame = DepthFrame(samples=np.full((DEPTH_HEIGHT, DEPTH_WIDTH), 100.0))
        with self.assertRaises(ValueError):
            frame.samples[0, 0] = 5.0

    def test_millimeter_payload(self) -> None:
        samples = np.full((DEPTH_HEIGHT, DEPTH_WIDTH), 123.4)
        frame = DepthFrame(samples=samples, frame_timestamp=7)
        counts = frame.to_millimeters()
        self.assertEqual(counts.dtype, np.uint16)
        self.assertEqual(int(counts[5, 5]), 1234)
        restored = DepthFrame.from_millimeters(counts, frame_timestamp=7)
        self.assertAlmostEqual(restored.sample(Pixel(u=5, v=5)), 123.4)
        self.assertEqual(restored.frame_timestamp, 7)


class TestSensorPose(unittest.TestCase):
    """Test cases for SensorPose."""

    def test_yaw_range(self) -> None:
        origin = Point3(x=0.0, y=0.0, z=100.0)
        SensorPose(origin_in_client=origin, yaw_theta=math.pi)
        with self.assertRaises(ValidationError):
            SensorPose(origin_in_client=origin, yaw_theta=-math.pi)
        with self.assertRaises(ValidationError):
            SensorPose(origin_in_client=origin, yaw_theta=4.0)


class TestSkeleton(unittest.TestCase):
    """Test cases for Skeleton."""

    def test_default_skeleton(self) -> None:
        skeleton = get_skeleton("default")
        self.assertEqual(len(skeleton.joints), 15)
        self.assertEqual(len(skeleton.limbs), 14)
        self.assertEqual(skeleton.index_of("head"), 0)
        self.assertIn("right_wrist", skeleton)

    def test_upper_body_limbs_stay_inside(self) -> None:
        skeleton = SKELETONS["upper_body"]
        for a, b in skeleton.limbs:
            self.assertIn(a, skeleton)
            self.assertIn(b, skeleton)

    def test_unknown_joint(self) -> None:
        with self.assertRaises(DomainError):
            get_skeleton("default").index_of("tail")

    def test_rejects_bad_limbs(self) -> None:
        with self.assertRaises(ValidationError):
            Skeleton(name="bad", joints=["a", "b"], limbs=[("a", "c")])
        with self.assertRaises(ValidationError):
            Skeleton(name="bad", joints=["a", "b"], limbs=[("a", "b"), ("b", "a")])
        with self.assertRaises(ValidationError):
            Skeleton(name="bad", joints=["a", "a"], limbs=[])


class TestObservations(unittest.TestCase):
    """Test cases for observation and report models."""

    def test_report_trust(self) -> None:
        report = OcclusionReport(
            sensor_id=1, occluded_joints=["neck"], inferred_joints=["right_wrist"]
        )
        self.assertFalse(report.is_trusted("neck"))
        self.assertFalse(report.is_trusted("right_wrist"))
        self.assertTrue(report.is_trusted("head"))

    def test_frame_by_joint(self) -> None:
        obs = JointObservation(
            joint="head",
            position=Point3(x=0.0, y=1.0, z=2.0),
            tracking_state=TrackingState.INFERRED,
            sensor_id=3,
        )
        frame = ObservationFrame(sensor_id=3, client_timestamp=10, observations=[obs])
        self.assertIs(frame.by_joint()["head"], obs)
        self.assertIsNone(frame.report)

    def test_wand_detection_bbox_order(self) -> None:
        with self.assertRaises(ValidationError):
            WandDetection(
                bbox_ul=Pixel(u=20, v=20),
                bbox_br=Pixel(u=10, v=30),
                center_pixel=Pixel(u=15, v=25),
                center_point=Point3(x=0.0, y=0.0, z=100.0),
                radius_cm=5.0,
            )


class TestFusedJoint(unittest.TestCase):
    """Test cases for FusedJoint."""

    def test_flags(self) -> None:
        position = Point3(x=0.0, y=0.0, z=0.0)
        self.assertEqual(FusedJoint(position=position, final_objective=0.0).flags(), "linear_ls")
        fused = FusedJoint(
            position=position,
            final_objective=1.0,
            initializer=Initializer.CENTROID,
            trilaterated=False,
            singular=True,
            converged=False,
        )
        self.assertEqual(fused.flags(), "centroid;fallback;singular;unconverged")

    def test_objective_non_negative(self) -> None:
        with self.assertRaises(ValidationError):
            FusedJoint(position=Point3(x=0.0, y=0.0, z=0.0), final_objective=-1.0)


class TestSync(unittest.TestCase):
    """Test cases for sync models."""

    def test_exchange_ordering(self) -> None:
        SyncExchange(t1=0, t2=100, t3=100, t4=10)
        with self.assertRaises(ValidationError):
            SyncExchange(t1=10, t2=0, t3=0, t4=5)
        with self.assertRaises(ValidationError):
            SyncExchange(t1=0, t2=10, t3=5, t4=20)

    def test_state_initialized(self) -> None:
        self.assertFalse(SyncState(sensor_id=1).initialized)
        self.assertTrue(SyncState(sensor_id=1, delay_d=5.0, clock_error_e=-3.0).initialized)


if __name__ == "__main__":
    unittest.main()
