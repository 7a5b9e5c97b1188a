"""Tests for scenario configuration."""

import math
import os
import tempfile
import unittest

from mctl.sim.scenario import (
    ScenarioConfig,
    SensorSpec,
    load_scenario,
    pose_error,
    true_pose,
    true_records,
    wand_placement,
)
from mctl.utils.errors import ConfigError
from mctl.utils.geometry import sensor_position


SCENARIO_DIR = os.path.join(os.path.dirname(__file__), "..", "..", "..", "scenarios")


class TestLoadScenario(unittest.TestCase):
    """Test cases for reading scenario files."""

    def setUp(self) -> None:
        self.tmpdir = tempfile.TemporaryDirectory()

    def tearDown(self) -> None:
        self.tmpdir.cleanup()

    def write(self, text: str) -> str:
        path = os.path.join(self.tmpdir.name, "scenario.toml")
        with open(path, "w") as f:
            f.write(text)
        return path

    def test_shipped_scenarios_load(self) -> None:
        for name in ("default.toml", "occlusion.toml", "lossy.toml"):
            with self.subTest(name=name):
                scenario = load_scenario(os.path.join(SCENARIO_DIR, name))
                self.assertEqual(len(scenario.sensors), 4)

    def test_overrides(self) -> None:
        path = self.write('name = "short"\nticks = 50\n')
        scenario = load_scenario(path, ticks=10, seed=None)
        self.assertEqual(scenario.name, "short")
        self.assertEqual(scenario.ticks, 10)
        self.assertEqual(scenario.seed, 0)

    def test_defaults_without_file(self) -> None:
        scenario = load_scenario()
        self.assertEqual(scenario.motion, "static")
        self.assertAlmostEqual(scenario.period_ms, 1000.0 / 30.0)

    def test_invalid_scenarios(self) -> None:
        cases = [
            'motion = "dance"\n',
            'calibration = "magic"\n',
            "[noise]\nkind = \"laplace\"\n",
            "[[sensors]]\nsensor_id = 1\nposition = [0.0, 0.0, -200.0]\n"
            "[[sensors]]\nsensor_id = 1\nposition = [10.0, 0.0, -200.0]\n",
            "[[sensors]]\nsensor_id = 1\nposition = [0.0, 0.0, 200.0]\n",
            "[[sensors]]\nsensor_id = 1\nposition = [0.0, -200.0]\n",
            "[[occlusions]]\nsensor_id = 9\njoints = [\"head\"]\n",
            "[[occlusions]]\nsensor_id = 1\njoints = [\"tail\"]\n",
        ]
        for text in cases:
            with self.subTest(text=text):
                with self.assertRaises(ConfigError):
                    load_scenario(self.write(text))

    def test_missing_file(self) -> None:
        with self.assertRaises(ConfigError):
            load_scenario(os.path.join(self.tmpdir.name, "missing.toml"))


class TestScenarioConfig(unittest.TestCase):
    """Test cases for scenario helpers."""

    def test_true_pose_places_sensor(self) -> None:
        for spec in ScenarioConfig().sensors:
            with self.subTest(sensor=spec.sensor_id):
                position = sensor_position(true_pose(spec))
                self.assertAlmostEqual(position.x, spec.position[0])
                self.assertAlmostEqual(position.y, spec.position[1])
                self.assertAlmostEqual(position.z, spec.position[2])

    def test_true_pose_wraps_yaw(self) -> None:
        spec = SensorSpec(sensor_id=1, position=[0.0, 0.0, -200.0], theta=3.0 * math.pi)
        self.assertAlmostEqual(true_pose(spec).yaw_theta, math.pi)

    def test_true_records(self) -> None:
        records = true_records(ScenarioConfig())
        self.assertEqual(sorted(records), [1, 2, 3, 4])
        self.assertEqual(records[2].sensor_id, 2)

    def test_occlusion_scripts(self) -> None:
        scenario = ScenarioConfig(
            occlusions=[
                {"sensor_id": 2, "joints": ["head"], "start_tick": 5, "end_tick": 10},
                {"sensor_id": 2, "joints": ["head", "neck"], "start_tick": 8},
            ]
        )
        self.assertEqual(scenario.occluded_joints(2, 4), [])
        self.assertEqual(scenario.occluded_joints(2, 5), ["head"])
        self.assertEqual(scenario.occluded_joints(2, 9), ["head", "neck"])
        self.assertEqual(scenario.occluded_joints(2, 12), ["head", "neck"])
        self.assertEqual(scenario.occluded_joints(1, 9), [])

    def test_wand_placement(self) -> None:
        scenario = ScenarioConfig(wand_trajectory_cm=25.0)
        self.assertEqual(wand_placement(scenario, 0).y, 0.0)
        self.assertEqual(wand_placement(scenario, 1).y, 25.0)

    def test_pose_error(self) -> None:
        spec = ScenarioConfig().sensors[0]
        pose = true_pose(spec)
        error = pose_error(pose, pose)
        self.assertEqual(error["theta_error_rad"], 0.0)
        self.assertEqual(error["origin_error_cm"], 0.0)


if __name__ == "__main__":
    unittest.main()
