"""Tests for the dagster assets and definitions."""

import os
import tempfile
import unittest

from dagster import build_init_resource_context, materialize

import mctl.assets as assets
from mctl.definitions import defs
from mctl.outputs.csv_output import read_csv
from mctl.resources import ArtifactResource


class TestArtifactResource(unittest.TestCase):
    """Test cases for ArtifactResource."""

    def setUp(self) -> None:
        self.tmpdir = tempfile.TemporaryDirectory()

    def tearDown(self) -> None:
        self.tmpdir.cleanup()

    def test_setup_creates_directory(self) -> None:
        directory = os.path.join(self.tmpdir.name, "artifacts")
        resource = ArtifactResource(output_dir=directory)
        resource.setup_for_execution(build_init_resource_context())
        self.assertTrue(os.path.isdir(directory))
        self.assertEqual(str(resource.path("a.csv")), os.path.join(directory, "a.csv"))

    def test_write(self) -> None:
        resource = ArtifactResource(output_dir=self.tmpdir.name)
        path = resource.write("s.csv", ["metric", "value"], [{"metric": "m", "value": 2}])
        self.assertEqual(read_csv(path), [{"metric": "m", "value": "2"}])


class TestDefinitions(unittest.TestCase):
    """Test cases for the repository definitions."""

    def test_jobs(self) -> None:
        self.assertIsNotNone(defs.get_job_def("simulated_session"))
        self.assertIsNotNone(defs.get_job_def("benchmark_suites"))


class TestMaterialize(unittest.TestCase):
    """Test cases for materializing the asset graphs."""

    def setUp(self) -> None:
        self.tmpdir = tempfile.TemporaryDirectory()
        self.resources = {"artifacts": ArtifactResource(output_dir=self.tmpdir.name)}

    def tearDown(self) -> None:
        self.tmpdir.cleanup()

    def test_benchmarks(self) -> None:
        small = {
            "trilateration_trials": 20,
            "sync_exchanges": 50,
            "occlusion_pairs": 50,
            "method_trials": 20,
        }
        names = [
            "trilateration_benchmark",
            "sync_benchmark",
            "occlusion_benchmark",
            "method_comparison",
        ]
        result = materialize(
            [
                assets.trilateration_benchmark,
                assets.sync_benchmark,
                assets.occlusion_benchmark,
                assets.method_comparison,
                assets.benchmark_artifacts,
            ],
            resources=self.resources,
            run_config={"ops": {name: {"config": small} for name in names}},
        )
        self.assertTrue(result.success)
        self.assertEqual(len(result.output_for_node("trilateration_benchmark")), 12)
        self.assertEqual(len(result.output_for_node("benchmark_artifacts")), 4)
        rows = read_csv(os.path.join(self.tmpdir.name, "occlusion.csv"))
        self.assertEqual(rows[0]["disagreements"], "0")

    def test_simulation(self) -> None:
        result = materialize(
            [assets.scenario, assets.simulated_run, assets.simulation_artifacts],
            resources=self.resources,
            run_config={"ops": {"scenario": {"config": {"ticks": 10, "seed": 3}}}},
        )
        self.assertTrue(result.success)
        self.assertEqual(len(result.output_for_node("simulation_artifacts")), 7)
        fused = read_csv(os.path.join(self.tmpdir.name, "fused.csv"))
        self.assertEqual(len(fused), 10 * 15)


if __name__ == "__main__":
    unittest.main()
