"""Tests for scripted motion and simulated tracking."""

import unittest

import numpy as np

from mctl.sim.scenario import Keyframe, NoiseConfig, ScenarioConfig
from mctl.sim.skeleton import (
    REST_POSE,
    generate_ground_truth,
    interpolate,
    motion_keyframes,
    observe_skeleton,
)
from mctl.utils.geometry import transform_to_server
from mctl.utils.models import TrackingState


class TestMotion(unittest.TestCase):
    """Test cases for keyframes and interpolation."""

    def test_interpolation(self) -> None:
        keyframes = [
            Keyframe(tick=0, joints={"head": [0.0, 75.0, 0.0]}),
            Keyframe(tick=10, joints={"head": [10.0, 75.0, -20.0]}),
        ]
        joints = ["head", "neck"]
        np.testing.assert_allclose(interpolate(keyframes, joints, 5)[0], [5.0, 75.0, -10.0])
        np.testing.assert_allclose(interpolate(keyframes, joints, 5)[1], REST_POSE["neck"])
        np.testing.assert_allclose(interpolate(keyframes, joints, -3)[0], [0.0, 75.0, 0.0])
        np.testing.assert_allclose(interpolate(keyframes, joints, 99)[0], [10.0, 75.0, -20.0])

    def test_motions_cover_the_run(self) -> None:
        for motion in ("static", "arm_swing", "walk", "reach"):
            with self.subTest(motion=motion):
                scenario = ScenarioConfig(motion=motion, ticks=40)
                truth = generate_ground_truth(scenario)
                self.assertEqual(truth.positions.shape, (40, 15, 3))
                self.assertTrue(np.all(np.isfinite(truth.positions)))

    def test_static_is_rest_pose(self) -> None:
        truth = generate_ground_truth(ScenarioConfig(motion="static", ticks=3))
        head = truth.joints.index("head")
        np.testing.assert_allclose(truth.positions[2, head], REST_POSE["head"])

    def test_walk_moves_forward(self) -> None:
        truth = generate_ground_truth(ScenarioConfig(motion="walk", ticks=31))
        spine = truth.joints.index("spine")
        self.assertAlmostEqual(truth.positions[30, spine, 0] - truth.positions[0, spine, 0], 45.0)

    def test_unknown_motion(self) -> None:
        with self.assertRaises(ValueError):
            motion_keyframes("dance", 10)

    def test_truth_is_read_only(self) -> None:
        truth = generate_ground_truth(ScenarioConfig(ticks=2))
        with self.assertRaises(ValueError):
            truth.positions[0, 0, 0] = 1.0
        self.assertEqual(len(truth.rows()), 2 * 15)


class TestObserveSkeleton(unittest.TestCase):
    """Test cases for simulated tracker output."""

    def setUp(self) -> None:
        self.scenario = ScenarioConfig(motion="arm_swing", ticks=20)
        self.truth = generate_ground_truth(self.scenario)
        self.spec = self.scenario.sensor(2)

    def test_noise_free_matches_truth(self) -> None:
        observations = observe_skeleton(self.truth, self.spec, 7, NoiseConfig())
        pose = self.truth.poses[2]
        for obs in observations:
            server = transform_to_server(obs.position, pose)
            self.assertLess(server.distance_to(self.truth.position(7, obs.joint)), 1e-9)
            self.assertIs(obs.tracking_state, TrackingState.TRACKED)
            self.assertEqual(obs.sensor_id, 2)

    def test_occluded_joints_are_inferred_and_biased(self) -> None:
        clean = observe_skeleton(self.truth, self.spec, 3, NoiseConfig())
        biased = observe_skeleton(
            self.truth, self.spec, 3, NoiseConfig(), occluded=["right_wrist"], inferred_bias_cm=8.0
        )
        index = self.truth.joints.index("right_wrist")
        self.assertIs(biased[index].tracking_state, TrackingState.INFERRED)
        self.assertAlmostEqual(biased[index].position.z - clean[index].position.z, 8.0)
        self.assertEqual(biased[0].position, clean[0].position)

    def test_uniform_range_noise_moves_along_ray(self) -> None:
        noise = NoiseConfig(kind="uniform_range", low=2.0, high=2.0)
        clean = observe_skeleton(self.truth, self.spec, 0, NoiseConfig())
        noisy = observe_skeleton(self.truth, self.spec, 0, noise, seed=4)
        for a, b in zip(clean, noisy):
            ray_a = a.position.to_array()
            ray_b = b.position.to_array()
            self.assertAlmostEqual(abs(np.linalg.norm(ray_b) - np.linalg.norm(ray_a)), 2.0)

    def test_deterministic(self) -> None:
        noise = NoiseConfig(sigma=2.0)
        first = observe_skeleton(self.truth, self.spec, 5, noise, seed=11)
        second = observe_skeleton(self.truth, self.spec, 5, noise, seed=11)
        other = observe_skeleton(self.truth, self.spec, 5, noise, seed=12)
        self.assertEqual(first, second)
        self.assertNotEqual(first, other)


if __name__ == "__main__":
    unittest.main()
