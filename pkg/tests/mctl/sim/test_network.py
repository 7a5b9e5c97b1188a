"""Tests for the simulated network links."""

import unittest

import numpy as np

from mctl.sim.network import Direction, LinkModel, simulate_network
from mctl.sim.scenario import DelayConfig


def up_timeline(count: int, spacing: float = 1.0):
    return [(index * spacing, Direction.UP) for index in range(count)]


class TestLinkModel(unittest.TestCase):
    """Test cases for delay sampling."""

    def test_asymmetry_splits_around_base(self) -> None:
        link = LinkModel(DelayConfig(base_ms=5.0, asymmetry_ms=4.0), np.random.default_rng(0))
        self.assertEqual(link.sample_delay(Direction.UP), 7.0)
        self.assertEqual(link.sample_delay(Direction.DOWN), 3.0)

    def test_jitter_bounds(self) -> None:
        link = LinkModel(DelayConfig(base_ms=5.0, jitter_ms=2.0), np.random.default_rng(1))
        delays = [link.sample_delay(Direction.UP) for _ in range(1000)]
        self.assertGreaterEqual(min(delays), 3.0)
        self.assertLessEqual(max(delays), 7.0)

    def test_delay_never_negative(self) -> None:
        link = LinkModel(DelayConfig(base_ms=0.0, jitter_ms=5.0), np.random.default_rng(2))
        self.assertTrue(all(link.sample_delay(Direction.DOWN) >= 0.0 for _ in range(200)))

    def test_disconnect_holds_for_reconnect_time(self) -> None:
        link = LinkModel(
            DelayConfig(disconnect_probability=1.0, reconnect_ms=100.0), np.random.default_rng(3)
        )
        self.assertTrue(link.maybe_disconnect(10.0))
        self.assertTrue(link.is_down(50.0))
        self.assertFalse(link.maybe_disconnect(60.0))
        self.assertFalse(link.is_down(110.0))


class TestSimulateNetwork(unittest.TestCase):
    """Test cases for whole-timeline delivery."""

    def test_in_order_delivery(self) -> None:
        delay = DelayConfig(base_ms=5.0, jitter_ms=4.0, spike_probability=0.1, spike_ms=30.0)
        deliveries = simulate_network(delay, up_timeline(500, spacing=0.5), seed=5)
        arrivals = [d.deliver_ms for d in deliveries]
        self.assertEqual(arrivals, sorted(arrivals))
        self.assertTrue(all(d.delay_ms >= 0.0 for d in deliveries))

    def test_directions_ordered_independently(self) -> None:
        timeline = [(0.0, Direction.UP), (0.0, Direction.DOWN), (1.0, Direction.UP)]
        deliveries = simulate_network(DelayConfig(base_ms=5.0, asymmetry_ms=4.0), timeline)
        by_direction = {d.direction: d for d in deliveries if d.send_ms == 0.0}
        self.assertEqual(by_direction[Direction.UP].deliver_ms, 7.0)
        self.assertEqual(by_direction[Direction.DOWN].deliver_ms, 3.0)

    def test_disconnect_loses_in_flight_messages(self) -> None:
        delay = DelayConfig(base_ms=20.0, disconnect_probability=0.01, reconnect_ms=20.0)
        deliveries = simulate_network(delay, up_timeline(1000), seed=6)
        lost = [d for d in deliveries if d.deliver_ms is None]
        self.assertGreater(len(lost), 0)
        self.assertTrue(all(d.delay_ms is None for d in lost))
        delivered = [d for d in deliveries if d.deliver_ms is not None]
        self.assertGreater(len(delivered), 0)

    def test_deterministic(self) -> None:
        delay = DelayConfig(base_ms=5.0, jitter_ms=3.0, disconnect_probability=0.01)
        first = simulate_network(delay, up_timeline(300), seed=8)
        second = simulate_network(delay, up_timeline(300), seed=8)
        self.assertEqual(first, second)


if __name__ == "__main__":
    unittest.main()
