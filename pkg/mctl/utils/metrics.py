"""Metrics utilities for tracking performance."""

import functools
import time
from typing import Any, Callable, Dict, List, Sequence, Tuple, TypeVar, cast

from dagster import get_dagster_logger

from mctl.utils.models import MetricsData


F = TypeVar("F", bound=Callable[..., Any])

logger = get_dagster_logger()

# Upper-open millisecond ranges, widest first.
TIME_BINS: List[Tuple[float, float]] = [
    (33.0, float("inf")),
    (22.0, 33.0),
    (11.0, 22.0),
    (4.0, 11.0),
    (2.0, 4.0),
    (0.0, 2.0),
]


def track_metrics(func: F) -> F:
    """Decorator to track execution metrics of a function."""

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        start_time = time.perf_counter()

        try:
            result = func(*args, **kwargs)
            execution_time = (time.perf_counter() - start_time) * 1000

            metrics = getattr(result, "metrics", None)
            if isinstance(metrics, MetricsData):
                metrics.execution_time_ms = execution_time

            logger.debug(f"Function {func.__name__} executed in {execution_time:.2f}ms")
            return result

        except Exception as e:
            execution_time = (time.perf_counter() - start_time) * 1000
            logger.error(f"Error in {func.__name__}: {str(e)} after {execution_time:.2f}ms")
            raise

    return cast(F, wrapper)


def bin_label(low: float, high: float) -> str:
    if high == float("inf"):
        return f"[{low:g},inf)"
    return f"[{low:g},{high:g})"


class TimingBins:
    """Histogram over TIME_BINS for durations or absolute clock errors in ms."""

    def __init__(self, bins: Sequence[Tuple[float, float]] = TIME_BINS) -> None:
        self.bins = list(bins)
        self.counts = [0] * len(self.bins)

    def add(self, value_ms: float) -> None:
        value_ms = abs(value_ms)
        for index, (low, high) in enumerate(self.bins):
            if low <= value_ms < high:
                self.counts[index] += 1
                return

    def extend(self, values: Sequence[float]) -> None:
        for value in values:
            self.add(value)

    @property
    def total(self) -> int:
        return sum(self.counts)

    def fraction_below(self, limit_ms: float) -> float:
        """Share of samples in bins lying entirely below limit_ms."""
        if not self.total:
            return 0.0
        inside = sum(
            count for (_, high), count in zip(self.bins, self.counts) if high <= limit_ms
        )
        return inside / self.total

    def rows(self) -> List[Dict[str, Any]]:
        total = self.total
        return [
            {
                "range_ms": bin_label(low, high),
                "count": count,
                "fraction": (count / total) if total else 0.0,
            }
            for (low, high), count in zip(self.bins, self.counts)
        ]
