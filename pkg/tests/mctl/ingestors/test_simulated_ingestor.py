"""Tests for the simulated sensor ingestor."""

import unittest

import numpy as np

from mctl.ingestors.base_ingestor import BaseIngestor
from mctl.ingestors.simulated_ingestor import SimulatedSensorIngestor
from mctl.processors.calibration import localize_wand
from mctl.sim.scenario import ScenarioConfig, wand_placement
from mctl.sim.skeleton import generate_ground_truth
from mctl.utils.geometry import transform_to_client, transform_to_server
from mctl.utils.models import DepthFrame, TrackingState


class TestSimulatedSensorIngestor(unittest.TestCase):
    """Test cases for SimulatedSensorIngestor."""

    def setUp(self) -> None:
        self.scenario = ScenarioConfig(
            motion="arm_swing",
            ticks=10,
            occlusions=[{"sensor_id": 3, "joints": ["left_wrist"], "start_tick": 4}],
        )
        self.truth = generate_ground_truth(self.scenario)
        self.ingestor = SimulatedSensorIngestor(self.scenario, 3, self.truth)

    def test_is_an_ingestor(self) -> None:
        self.assertIsInstance(self.ingestor, BaseIngestor)
        self.assertEqual(self.ingestor.name, "sim_sensor_3")
        self.assertEqual(self.ingestor.sensor_id, 3)

    def test_observations_map_back_to_truth(self) -> None:
        pose = self.truth.poses[3]
        for obs in self.ingestor.ingest(2):
            server = transform_to_server(obs.position, pose)
            self.assertLess(server.distance_to(self.truth.position(2, obs.joint)), 1e-9)

    def test_ticks_are_clamped(self) -> None:
        self.assertEqual(self.ingestor.ingest(-5), self.ingestor.ingest(0))
        self.assertEqual(self.ingestor.ingest(50), self.ingestor.ingest(9))

    def test_scripted_joints_are_inferred(self) -> None:
        states = {obs.joint: obs.tracking_state for obs in self.ingestor.ingest(6)}
        self.assertIs(states["left_wrist"], TrackingState.INFERRED)
        self.assertIs(states["head"], TrackingState.TRACKED)
        early = {obs.joint: obs.tracking_state for obs in self.ingestor.ingest(1)}
        self.assertIs(early["left_wrist"], TrackingState.TRACKED)

    def test_create_frame_stamps_observations(self) -> None:
        frame = self.ingestor.create_frame(3, client_timestamp=4321)
        self.assertEqual(frame.sensor_id, 3)
        self.assertEqual(frame.client_timestamp, 4321)
        self.assertEqual(len(frame.observations), 15)
        self.assertTrue(all(obs.client_timestamp == 4321 for obs in frame.observations))
        self.assertIsNone(frame.report)

    def test_capture_depth_shows_the_wand(self) -> None:
        for placement in (0, 1):
            with self.subTest(placement=placement):
                frame = self.ingestor.capture_depth(placement)
                self.assertFalse(frame.out_of_range)
                expected = transform_to_client(
                    wand_placement(self.scenario, placement), self.truth.poses[3]
                )
                detection = localize_wand(frame)
                self.assertLess(detection.center_point.distance_to(expected), 0.5)

    def test_capture_depth_is_whole_millimeters(self) -> None:
        frame = self.ingestor.capture_depth(0)
        counts = frame.samples * 10.0
        np.testing.assert_allclose(counts, np.rint(counts), atol=1e-9)
        np.testing.assert_array_equal(
            DepthFrame.from_millimeters(frame.to_millimeters()).samples, frame.samples
        )


if __name__ == "__main__":
    unittest.main()
