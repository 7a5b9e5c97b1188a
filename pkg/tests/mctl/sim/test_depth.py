"""Tests for synthetic depth frames."""

import unittest

import numpy as np

from mctl.sim.depth import BACKGROUND_CM, in_view, render_sphere, render_wand_depth
from mctl.utils.geometry import CENTER_U, CENTER_V
from mctl.utils.models import Point3, SensorPose


class TestRenderSphere(unittest.TestCase):
    """Test cases for ray-cast wand rendering."""

    def test_on_axis_surface(self) -> None:
        samples = render_sphere(Point3(x=0.0, y=0.0, z=200.0), 5.0)
        self.assertAlmostEqual(samples[CENTER_V, CENTER_U], 195.0)
        self.assertEqual(samples[0, 0], BACKGROUND_CM)
        self.assertGreater(int((samples < BACKGROUND_CM).sum()), 50)

    def test_nearer_sphere_covers_more_pixels(self) -> None:
        near = render_sphere(Point3(x=0.0, y=0.0, z=120.0), 5.0)
        far = render_sphere(Point3(x=0.0, y=0.0, z=300.0), 5.0)
        self.assertGreater((near < BACKGROUND_CM).sum(), (far < BACKGROUND_CM).sum())

    def test_behind_sensor_not_rendered(self) -> None:
        samples = render_sphere(Point3(x=0.0, y=0.0, z=-200.0), 5.0)
        self.assertTrue(np.all(samples == BACKGROUND_CM))


class TestRenderWandDepth(unittest.TestCase):
    """Test cases for server-frame wand rendering."""

    def setUp(self) -> None:
        self.pose = SensorPose(origin_in_client=Point3(x=0.0, y=0.0, z=200.0), yaw_theta=0.0)

    def test_noise_only_on_wand(self) -> None:
        rng = np.random.default_rng(0)
        frame = render_wand_depth(Point3(x=0.0, y=0.0, z=0.0), self.pose, noise_cm=1.0, rng=rng)
        clean = render_sphere(Point3(x=0.0, y=0.0, z=200.0), 5.0)
        background = clean == BACKGROUND_CM
        np.testing.assert_array_equal(frame.samples[background], clean[background])
        self.assertFalse(np.allclose(frame.samples[~background], clean[~background]))
        self.assertFalse(frame.out_of_range)

    def test_out_of_view(self) -> None:
        frame = render_wand_depth(Point3(x=500.0, y=0.0, z=0.0), self.pose)
        self.assertTrue(frame.out_of_range)

    def test_in_view(self) -> None:
        self.assertTrue(in_view(Point3(x=0.0, y=0.0, z=200.0)))
        self.assertFalse(in_view(Point3(x=0.0, y=0.0, z=-10.0)))
        self.assertFalse(in_view(Point3(x=0.0, y=0.0, z=700.0)))
        self.assertFalse(in_view(Point3(x=400.0, y=0.0, z=200.0)))


if __name__ == "__main__":
    unittest.main()
