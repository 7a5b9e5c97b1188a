"""Tests for metrics utilities."""

import unittest

from pydantic import BaseModel, Field

from mctl.utils.metrics import TimingBins, bin_label, track_metrics
from mctl.utils.models import MetricsData


class Timed(BaseModel):
    metrics: MetricsData = Field(default_factory=MetricsData)


class TestTrackMetrics(unittest.TestCase):
    """Test cases for the track_metrics decorator."""

    def test_records_execution_time(self) -> None:
        @track_metrics
        def work() -> Timed:
            sum(range(10000))
            return Timed()

        result = work()
        self.assertGreaterEqual(result.metrics.execution_time_ms, 0.0)

    def test_passes_through_plain_results(self) -> None:
        @track_metrics
        def add(a: int, b: int) -> int:
            return a + b

        self.assertEqual(add(2, 3), 5)
        self.assertEqual(add.__name__, "add")

    def test_reraises(self) -> None:
        @track_metrics
        def fail() -> None:
            raise RuntimeError("boom")

        with self.assertRaises(RuntimeError):
            fail()


class TestTimingBins(unittest.TestCase):
    """Test cases for TimingBins."""

    def test_bin_edges(self) -> None:
        bins = TimingBins()
        bins.extend([0.0, 1.99, 2.0, 10.0, 33.0, 120.0, -1.5])
        counts = {row["range_ms"]: row["count"] for row in bins.rows()}
        self.assertEqual(counts["[0,2)"], 3)
        self.assertEqual(counts["[2,4)"], 1)
        self.assertEqual(counts["[4,11)"], 1)
        self.assertEqual(counts["[33,inf)"], 2)
        self.assertEqual(bins.total, 7)

    def test_fraction_below(self) -> None:
        bins = TimingBins()
        self.assertEqual(bins.fraction_below(33.0), 0.0)
        bins.extend([1.0, 10.0, 40.0])
        self.assertAlmostEqual(bins.fraction_below(33.0), 2.0 / 3.0)
        self.assertAlmostEqual(bins.fraction_below(2.0), 1.0 / 3.0)

    def test_rows_fractions_sum_to_one(self) -> None:
        bins = TimingBins()
        bins.extend([0.5, 3.0, 3.5, 25.0])
        self.assertAlmostEqual(sum(row["fraction"] for row in bins.rows()), 1.0)

    def test_labels(self) -> None:
        self.assertEqual(bin_label(0.0, 2.0), "[0,2)")
        self.assertEqual(bin_label(33.0, float("inf")), "[33,inf)")


if __name__ == "__main__":
    unittest.main()
