"""Benchmark suites over the solver, clock sync and crossing test."""

import math
import sys
import time
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from dagster import get_dagster_logger
from tqdm import tqdm

from mctl.processors.occlusion import Segment2, segments_cross
from mctl.processors.timesync import compute_offset_delay, update_sync_state
from mctl.processors.trilateration import SolverConfig, fuse_joint, solve_ranges
from mctl.sim.network import Direction, LinkModel
from mctl.sim.scenario import DelayConfig, default_sensors
from mctl.utils.metrics import TimingBins
from mctl.utils.models import Point3, SyncExchange, SyncState


logger = get_dagster_logger()

THRESHOLDS = (1.0, 1e-2, 1e-4, 1e-6)
# Widest first; (low, high, label).
ERROR_RANGES: Tuple[Tuple[float, float, str], ...] = (
    (15.0, 30.0, "(15,30]"),
    (5.0, 15.0, "[5,15]"),
    (0.0, 5.0, "[0,5)"),
)
TETRAHEDRON_RADIUS_CM = 250.0
TARGET_HALF_WIDTH_CM = 30.0


def _progress(iterable, desc: str, show_progress: bool, total: Optional[int] = None):
    enabled = show_progress and sys.stderr.isatty()
    return tqdm(iterable, desc=desc, total=total, disable=not enabled)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniformly random proper rotation matrix."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def tetrahedron(radius: float = TETRAHEDRON_RADIUS_CM) -> np.ndarray:
    vertices = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    return vertices * radius / math.sqrt(3.0)


class TrilaterationInstance(NamedTuple):
    sensors: np.ndarray
    target: np.ndarray
    ranges: np.ndarray


def sample_instance(
    rng: np.random.Generator, low: float, high: float
) -> TrilaterationInstance:
    """Rotated tetrahedron of sensors, a target near its center, perturbed ranges."""
    sensors = tetrahedron() @ random_rotation(rng).T
    target = rng.uniform(-TARGET_HALF_WIDTH_CM, TARGET_HALF_WIDTH_CM, size=3)
    true_ranges = np.linalg.norm(sensors - target, axis=1)
    magnitude = rng.uniform(low, high, size=len(sensors))
    signs = np.where(rng.random(len(sensors)) < 0.5, -1.0, 1.0)
    return TrilaterationInstance(sensors, target, true_ranges + signs * magnitude)


def run_threshold_benchmark(
    thresholds: Sequence[float] = THRESHOLDS,
    error_ranges: Sequence[Tuple[float, float, str]] = ERROR_RANGES,
    trials: int = 5000,
    seed: int = 0,
    show_progress: bool = True,
) -> List[Dict]:
    """Propagation error and solve time per (error range, threshold).

    Every threshold of a range solves the same seeded instances, so the error
    columns only move with the threshold.
    """
    rows: List[Dict] = []
    for index, (low, high, label) in enumerate(error_ranges):
        rng = np.random.default_rng([seed, index])
        instances = [sample_instance(rng, low, high) for _ in range(trials)]
        for threshold in thresholds:
            config = SolverConfig(c_threshold=threshold)
            errors = np.empty(trials)
            iterations = np.empty(trials)
            elapsed = 0.0
            for k, instance in enumerate(
                _progress(instances, f"{label} @ {threshold:g}", show_progress)
            ):
                start = time.perf_counter()
                solution = solve_ranges(instance.sensors, instance.ranges, config)
                elapsed += time.perf_counter() - start
                errors[k] = np.linalg.norm(solution.position - instance.target)
                iterations[k] = solution.iterations
            rows.append(
                {
                    "error_range": label,
                    "threshold": threshold,
                    "mean_error_cm": float(errors.mean()),
                    "mean_time_us": elapsed / trials * 1e6,
                    "iters_mean": float(iterations.mean()),
                }
            )
            logger.info(
                f"Range {label}, threshold {threshold:g}: "
                f"{errors.mean():.3f} cm in {iterations.mean():.2f} iterations"
            )
    return rows


class SyncBenchmark(NamedTuple):
    bins: TimingBins
    rows: List[Dict]
    errors: List[float]

    @property
    def fraction_below_2ms(self) -> float:
        return self.bins.fraction_below(2.0)


def run_sync_benchmark(
    exchanges: int = 10000,
    jitter_ms: float = 2.0,
    base_ms: float = 5.0,
    asymmetry_ms: float = 0.0,
    clock_offset_ms: int = 137,
    window: int = 5,
    period_ms: int = 1000,
    seed: int = 0,
    show_progress: bool = True,
) -> SyncBenchmark:
    """Smoothed clock-error accuracy over simulated four-stamp exchanges.

    Stamps are integer milliseconds of each side's clock; the client answers
    at once. Errors are binned from the exchange where the history is full.
    """
    link = LinkModel(
        DelayConfig(base_ms=base_ms, jitter_ms=jitter_ms, asymmetry_ms=asymmetry_ms),
        np.random.default_rng(seed),
    )
    state = SyncState(sensor_id=1, window=window)
    true_error = -float(clock_offset_ms)
    bins = TimingBins()
    rows: List[Dict] = []
    errors: List[float] = []
    for index in _progress(range(exchanges), "sync exchanges", show_progress, exchanges):
        t1 = index * period_ms
        arrival = t1 + link.sample_delay(Direction.DOWN)
        t2 = math.floor(arrival) + clock_offset_ms
        t4 = math.floor(arrival + link.sample_delay(Direction.UP))
        exchange = SyncExchange(t1=t1, t2=t2, t3=t2, t4=t4)
        d, e = compute_offset_delay(exchange)
        state = update_sync_state(state, exchange)
        rows.append({"sensor_id": 1, "exchange_idx": index, "d_ms": d, "e_ms": e})
        if index + 1 >= window:
            error = state.clock_error_e - true_error  # type: ignore[operator]
            errors.append(error)
            bins.add(error)
    logger.info(f"Sync benchmark: {bins.fraction_below(2.0):.2%} of estimates within 2 ms")
    return SyncBenchmark(bins, rows, errors)


def segment_distance(a: np.ndarray, b: np.ndarray, p: np.ndarray) -> float:
    """Distance from point p to segment ab."""
    ab = b - a
    t = float(np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * ab)))


def endpoint_clearance(a1: np.ndarray, a2: np.ndarray, b1: np.ndarray, b2: np.ndarray) -> float:
    """Smallest distance of any endpoint to the other segment."""
    return min(
        segment_distance(b1, b2, a1),
        segment_distance(b1, b2, a2),
        segment_distance(a1, a2, b1),
        segment_distance(a1, a2, b2),
    )


def sampled_cross(
    a1: np.ndarray, a2: np.ndarray, b1: np.ndarray, b2: np.ndarray, samples: int, eps: float
) -> bool:
    """Dense-sampling oracle: some pair of sample points lies within eps."""
    t = np.linspace(0.0, 1.0, samples)[:, None]
    pa = a1 + t * (a2 - a1)
    pb = b1 + t * (b2 - b1)
    gaps = np.linalg.norm(pa[:, None, :] - pb[None, :, :], axis=-1)
    return bool(gaps.min() < eps)


def run_occlusion_benchmark(
    pairs: int = 10000,
    seed: int = 0,
    extent: float = 100.0,
    samples: int = 100,
    eps: float = 2.0,
    show_progress: bool = True,
) -> Dict:
    """Compare segments_cross with the sampling oracle on random segment pairs.

    Pairs with an endpoint closer than twice eps to the other segment are
    redrawn, so exactly `pairs` pairs are checked; away from them, sample
    spacing below eps makes the oracle exact.
    """
    rng = np.random.default_rng(seed)
    crossing = disagreements = skipped = 0
    for _ in _progress(range(pairs), "segment pairs", show_progress, pairs):
        a1, a2, b1, b2 = rng.uniform(0.0, extent, size=(4, 2))
        while endpoint_clearance(a1, a2, b1, b2) < 2.0 * eps:
            skipped += 1
            a1, a2, b1, b2 = rng.uniform(0.0, extent, size=(4, 2))
        a = Segment2(x1=a1[0], y1=a1[1], z1=0.0, x2=a2[0], y2=a2[1], z2=0.0)
        b = Segment2(x1=b1[0], y1=b1[1], z1=0.0, x2=b2[0], y2=b2[1], z2=0.0)
        predicted = segments_cross(a, b)
        crossing += int(predicted)
        if predicted != sampled_cross(a1, a2, b1, b2, samples, eps):
            disagreements += 1
    logger.info(
        f"Crossing oracle: {disagreements} disagreements over {pairs} pairs "
        f"({skipped} near-degenerate draws redrawn)"
    )
    return {
        "pairs": pairs,
        "crossing": crossing,
        "disagreements": disagreements,
        "skipped_degenerate": skipped,
    }


def _noisy_views(
    rng: np.random.Generator, sensors: np.ndarray, target: np.ndarray, sigma: float
) -> List[Tuple[Point3, Point3]]:
    return [
        (Point3.from_array(s), Point3.from_array(target + rng.normal(0.0, sigma, size=3)))
        for s in sensors
    ]


def run_method_comparison(
    trials: int = 1000,
    sigma: float = 3.0,
    seed: int = 0,
    show_progress: bool = True,
) -> List[Dict]:
    """Linear versus nonlinear fusion with three and four sensors.

    Sensors sit at the default scenario placement; each observes a target in
    a 60 cm cube around the server origin with Gaussian positional noise.
    Linear fusion of three sensors has no least-squares solution and falls
    back to the observation mean.
    """
    all_sensors = np.array([spec.position for spec in default_sensors()], dtype=float)
    rng = np.random.default_rng(seed)
    errors: Dict[Tuple[str, int], List[float]] = {
        (method, n): [] for n in (3, 4) for method in ("single", "linear", "nonlinear")
    }
    for _ in _progress(range(trials), "fusion instances", show_progress, trials):
        target = rng.uniform(-TARGET_HALF_WIDTH_CM, TARGET_HALF_WIDTH_CM, size=3)
        views = _noisy_views(rng, all_sensors, target, sigma)
        for n in (3, 4):
            subset = views[:n]
            errors[("single", n)].extend(
                float(np.linalg.norm(j.to_array() - target)) for _, j in subset
            )
            for method in ("linear", "nonlinear"):
                fused = fuse_joint(subset, solver=method)
                error = np.linalg.norm(fused.position.to_array() - target)
                errors[(method, n)].append(float(error))

    rows: List[Dict] = []
    for n in (3, 4):
        linear_mae = float(np.mean(errors[("linear", n)]))
        for method in ("single", "linear", "nonlinear"):
            values = np.array(errors[(method, n)])
            mae = float(values.mean())
            improvement = (linear_mae - mae) / linear_mae * 100.0 if method == "nonlinear" else ""
            rows.append(
                {
                    "method": method,
                    "sensors": n,
                    "mae_cm": mae,
                    "std_cm": float(values.std()),
                    "improvement_pct": improvement,
                }
            )
        logger.info(
            f"{n} sensors: linear {linear_mae:.3f} cm, "
            f"nonlinear {np.mean(errors[('nonlinear', n)]):.3f} cm"
        )
    return rows
