"""Calibration wand recognition and sensor pose registration.

A spherical wand of known size is the nearest object in the calibration
scene. It is segmented from the depth frame by iterated thresholding, located
in the client frame, validated over several captures and finally registered
from two placements: the first placement becomes the shared origin and the
trajectory between the two becomes the server y-axis.
"""

import math
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from dagster import Config, get_dagster_logger
from pydantic import Field

from mctl.processors.base_processor import BaseProcessor
from mctl.processors.trilateration import SolverConfig, solve_ranges
from mctl.utils.errors import (
    CalibrationError,
    CalibrationFrameRejected,
    TrajectoryTooShort,
    WandNotFound,
    WandTooSmall,
)
from mctl.utils.geometry import RAD_PER_PIXEL_U, normalize_angle, pixel_angles, pixel_to_camera
from mctl.utils.metrics import track_metrics
from mctl.utils.models import (
    DEPTH_HEIGHT,
    DEPTH_WIDTH,
    MAX_DEPTH_CM,
    MIN_DEPTH_CM,
    CalibrationRecord,
    DepthFrame,
    Pixel,
    Point3,
    SensorPose,
    WandDetection,
)


logger = get_dagster_logger()

MIN_TRAJECTORY_CM = 10.0
MAX_SEGMENT_ITERATIONS = 50
MAX_FIT_POINTS = 2000

SPHERE_FIT = SolverConfig(c_threshold=1e-10, max_iterations=50)

BoundingBox = Tuple[Pixel, Pixel]


class WandConfig(Config):
    """Configuration for wand recognition."""

    c_offset: float = Field(default=0.5025, gt=0, lt=1)
    wand_radius_cm: float = Field(default=5.0, gt=0)
    max_dev_cm: float = Field(default=5.0, gt=0)
    samples_per_placement: int = Field(default=5, ge=3)
    max_iterations: int = MAX_SEGMENT_ITERATIONS
    refine: bool = True


class SampleSummary(NamedTuple):
    detection: WandDetection
    kept: int
    spread_cm: float


def standardize_depth(frame: DepthFrame) -> DepthFrame:
    """Clamp samples into the sensor range; zero-depth noise becomes background."""
    samples = np.where(frame.samples == 0.0, MAX_DEPTH_CM, frame.samples)
    return DepthFrame(
        samples=np.clip(samples, MIN_DEPTH_CM, MAX_DEPTH_CM),
        frame_timestamp=frame.frame_timestamp,
        out_of_range=frame.out_of_range,
    )


def binarization_sequence(
    samples: np.ndarray,
    c_offset: float = 0.5025,
    wand_diameter_cm: float = 10.0,
    max_iterations: int = MAX_SEGMENT_ITERATIONS,
) -> List[np.ndarray]:
    """Label maps produced by successive threshold iterations.

    Iteration k labels every sample no deeper than c_offset times the mean
    depth of the samples labeled in iteration k-1, starting from an all-ones
    map. The sequence ends at a fixed point, once the labeled depths span at
    most two wand diameters, or when a map comes out empty.
    """
    labels = np.ones(samples.shape, dtype=bool)
    sequence: List[np.ndarray] = []
    for _ in range(max_iterations):
        threshold = float(samples[labels].mean()) * c_offset
        current = samples <= threshold
        sequence.append(current)
        if not current.any():
            break
        if np.array_equal(current, labels):
            break
        labeled = samples[current]
        if float(labeled.max() - labeled.min()) <= 2.0 * wand_diameter_cm:
            break
        labels = current
    return sequence


def bounding_box(labels: np.ndarray) -> BoundingBox:
    rows = np.flatnonzero(labels.any(axis=1))
    cols = np.flatnonzero(labels.any(axis=0))
    if rows.size == 0:
        raise WandNotFound("no labeled pixels")
    return (
        Pixel(u=int(cols[0]), v=int(rows[0])),
        Pixel(u=int(cols[-1]), v=int(rows[-1])),
    )


def segment_wand(
    frame: DepthFrame,
    c_offset: float = 0.5025,
    wand_diameter_cm: float = 10.0,
) -> Tuple[np.ndarray, BoundingBox]:
    """Segment the nearest blob of a standardized frame.

    Args:
        frame: Standardized depth frame
        c_offset: Threshold coefficient in (0, 1)
        wand_diameter_cm: Expected wand diameter for the spread stop test

    Returns:
        Final label map and its tight bounding box
    """
    sequence = binarization_sequence(frame.samples, c_offset, wand_diameter_cm)
    labels = sequence[-1]
    if not labels.any():
        raise WandNotFound("segmentation left no pixels labeled")
    return labels, bounding_box(labels)


def _surface_depth(samples: np.ndarray, pixel: Pixel) -> float:
    v0, v1 = max(pixel.v - 1, 0), min(pixel.v + 2, DEPTH_HEIGHT)
    u0, u1 = max(pixel.u - 1, 0), min(pixel.u + 2, DEPTH_WIDTH)
    return float(np.median(samples[v0:v1, u0:u1]))


def fit_sphere(
    samples: np.ndarray,
    labels: np.ndarray,
    initial: np.ndarray,
    radius_cm: float,
) -> np.ndarray:
    """Least-squares center of a sphere of known radius through the labeled surface.

    Every labeled pixel back-projects to a surface point at exactly one radius
    from the center, which is a range problem with the surface points as
    anchors. The fit starts behind the surface so it cannot settle on the
    mirrored solution in front of it.
    """
    vs, us = np.nonzero(labels)
    if len(us) < 4:
        return initial
    if len(us) > MAX_FIT_POINTS:
        keep = np.linspace(0, len(us) - 1, MAX_FIT_POINTS).astype(int)
        vs, us = vs[keep], us[keep]

    depths = samples[vs, us]
    alpha, beta = pixel_angles(us, vs)
    points = np.column_stack([depths * np.tan(alpha), depths * np.tan(beta), depths])
    solution = solve_ranges(
        points, np.full(len(points), radius_cm), SPHERE_FIT, warm_start=initial
    )
    if solution.singular or solution.position[2] <= float(depths.min()):
        logger.debug("Sphere fit rejected; keeping the silhouette estimate")
        return initial
    return solution.position


def localize_wand(
    frame: DepthFrame,
    c_offset: float = 0.5025,
    wand_radius_cm: float = 5.0,
    refine: bool = True,
) -> WandDetection:
    """Locate the wand center in the client frame.

    The center pixel is the bounding box midpoint. The wand radius follows
    from the angular width of the box at the measured distance, and the center
    lies one radius beyond the surface point along the viewing ray. With
    refine set, that estimate seeds a sphere fit over every labeled pixel.
    """
    frame = standardize_depth(frame)
    labels, (ul, br) = segment_wand(frame, c_offset, 2.0 * wand_radius_cm)

    width_px = br.u - ul.u + 1
    height_px = br.v - ul.v + 1
    if width_px < 2 or height_px < 2:
        raise WandTooSmall(f"wand bounding box is {width_px}x{height_px} px")

    mid_u = (ul.u + br.u) / 2.0
    mid_v = (ul.v + br.v) / 2.0
    center_pixel = Pixel(u=int(mid_u), v=int(mid_v))
    depth = _surface_depth(frame.samples, center_pixel)
    surface = pixel_to_camera(center_pixel, depth)

    # Ray through the fractional box center, scaled to the measured depth.
    alpha, beta = pixel_angles(mid_u, mid_v)
    ray = np.array([math.tan(alpha), math.tan(beta), 1.0])
    direction = ray / np.linalg.norm(ray)
    surface_range = depth * float(np.linalg.norm(ray))

    # Horizontal silhouette half-angle sees the sphere at its distance in the x-z plane.
    half_angle = (width_px / 2.0) * RAD_PER_PIXEL_U
    xz_share = math.sqrt(ray[0] ** 2 + 1.0) / float(np.linalg.norm(ray))
    k = xz_share * math.sin(half_angle)
    if k >= 1.0:
        raise WandTooSmall("wand fills the field of view")
    radius = surface_range * k / (1.0 - k)

    center = direction * (surface_range + radius)
    if refine:
        center = fit_sphere(frame.samples, labels, center, wand_radius_cm)
    partial = ul.u == 0 or ul.v == 0 or br.u == DEPTH_WIDTH - 1 or br.v == DEPTH_HEIGHT - 1
    if abs(radius - wand_radius_cm) > wand_radius_cm:
        logger.debug(
            f"Wand radius estimate {radius:.2f} cm differs from nominal {wand_radius_cm} cm"
        )
    logger.debug(f"Wand surface at {surface.z:.1f} cm, bbox {width_px}x{height_px} px")
    return WandDetection(
        bbox_ul=ul,
        bbox_br=br,
        center_pixel=center_pixel,
        center_point=Point3.from_array(center),
        radius_cm=radius,
        partial=partial,
    )


def _mean_detection(detections: Sequence[WandDetection]) -> WandDetection:
    centers = np.array([d.center_point.to_array() for d in detections])
    mean = centers.mean(axis=0)
    nearest = detections[int(np.argmin(np.linalg.norm(centers - mean, axis=1)))]
    return WandDetection(
        bbox_ul=nearest.bbox_ul,
        bbox_br=nearest.bbox_br,
        center_pixel=nearest.center_pixel,
        center_point=Point3.from_array(mean),
        radius_cm=float(np.mean([d.radius_cm for d in detections])),
        partial=any(d.partial for d in detections),
    )


def summarize_samples(detections: Sequence[WandDetection], max_dev: float = 5.0) -> SampleSummary:
    """Validate repeated captures of one placement and report the spread kept."""
    if len(detections) < 2:
        raise CalibrationFrameRejected(f"only {len(detections)} wand samples")

    centers = np.array([d.center_point.to_array() for d in detections])
    pairwise = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=2)
    if pairwise.max() <= max_dev:
        kept = list(detections)
    else:
        median = np.median(centers, axis=0)
        distances = np.linalg.norm(centers - median, axis=1)
        kept = [d for d, dist in zip(detections, distances) if dist <= max_dev]
        if len(kept) < 2:
            raise CalibrationFrameRejected(
                f"{len(kept)} of {len(detections)} samples within {max_dev} cm of the median"
            )

    mean = _mean_detection(kept)
    kept_centers = np.array([d.center_point.to_array() for d in kept])
    spread = float(np.linalg.norm(kept_centers - mean.center_point.to_array(), axis=1).max())
    return SampleSummary(mean, len(kept), spread)


def validate_samples(detections: Sequence[WandDetection], max_dev: float = 5.0) -> WandDetection:
    """Average repeated captures, dropping outliers beyond max_dev of the median."""
    return summarize_samples(detections, max_dev).detection


def register_pose(first: WandDetection, second: WandDetection) -> SensorPose:
    """Pose from two wand placements; the trajectory defines the server y-axis."""
    dx = second.center_point.x - first.center_point.x
    dy = second.center_point.y - first.center_point.y
    planar = math.hypot(dx, dy)
    if planar < MIN_TRAJECTORY_CM:
        raise TrajectoryTooShort(f"wand moved {planar:.2f} cm in the sensor x-y plane")
    return SensorPose(
        origin_in_client=first.center_point,
        yaw_theta=normalize_angle(math.atan2(dx, dy)),
    )


class WandCalibrationProcessor(BaseProcessor[Sequence[DepthFrame], SampleSummary]):
    """Turns the captures of one wand placement into a validated detection."""

    def __init__(
        self,
        config: Optional[WandConfig] = None,
        name: str = "wand_calibration",
        description: str = "Locate and validate the calibration wand",
    ) -> None:
        super().__init__(name, description)
        self.wand_config = config or WandConfig()

    def detect(self, frame: DepthFrame) -> WandDetection:
        return localize_wand(
            frame,
            self.wand_config.c_offset,
            self.wand_config.wand_radius_cm,
            refine=self.wand_config.refine,
        )

    def process(self, data: Sequence[DepthFrame]) -> SampleSummary:
        """Localize each frame and validate the placement.

        Args:
            data: Depth frames captured at one wand placement

        Returns:
            SampleSummary of the accepted detections
        """
        detections: List[WandDetection] = []
        for frame in data:
            try:
                detection = self.detect(frame)
            except CalibrationError as e:
                logger.warning(f"Skipping calibration frame: {str(e)}")
                continue
            if detection.partial:
                logger.warning("Skipping partial wand detection at the image border")
                continue
            detections.append(detection)
        return summarize_samples(detections, self.wand_config.max_dev_cm)

    @track_metrics
    def calibrate_sensor(
        self,
        first_frames: Sequence[DepthFrame],
        second_frames: Sequence[DepthFrame],
        sensor_id: int,
    ) -> CalibrationRecord:
        """Register a sensor from the frames of both wand placements."""
        first = self.process(first_frames)
        second = self.process(second_frames)
        pose = register_pose(first.detection, second.detection)
        record = CalibrationRecord(
            sensor_id=sensor_id,
            pose=pose,
            sample_count=first.kept + second.kept,
            residual_spread=max(first.spread_cm, second.spread_cm),
        )
        logger.info(
            f"Registered sensor {sensor_id}: theta={pose.yaw_theta:.4f} rad, "
            f"origin=({pose.origin_in_client.x:.2f}, {pose.origin_in_client.y:.2f}, "
            f"{pose.origin_in_client.z:.2f})"
        )
        return record


def calibrate_sensor(
    first_frames: Sequence[DepthFrame],
    second_frames: Sequence[DepthFrame],
    sensor_id: int,
    config: Optional[WandConfig] = None,
) -> CalibrationRecord:
    return WandCalibrationProcessor(config).calibrate_sensor(
        first_frames, second_frames, sensor_id
    )


def format_calibration_record(record: CalibrationRecord) -> str:
    origin = record.pose.origin_in_client
    return (
        f"{record.sensor_id} {record.pose.yaw_theta!r} {origin.x!r} {origin.y!r} {origin.z!r} "
        f"{record.sample_count} {record.residual_spread!r}"
    )


def parse_calibration_record(line: str) -> CalibrationRecord:
    fields = line.split()
    if len(fields) != 7:
        raise CalibrationError(f"expected 7 fields, got {len(fields)}: {line!r}")
    try:
        return CalibrationRecord(
            sensor_id=int(fields[0]),
            pose=SensorPose(
                origin_in_client=Point3(
                    x=float(fields[2]), y=float(fields[3]), z=float(fields[4])
                ),
                yaw_theta=float(fields[1]),
            ),
            sample_count=int(fields[5]),
            residual_spread=float(fields[6]),
        )
    except ValueError as e:
        raise CalibrationError(f"invalid calibration record {line!r}: {e}")


def save_calibration_records(path: str, records: Iterable[CalibrationRecord]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for record in sorted(records, key=lambda r: r.sensor_id):
            f.write(format_calibration_record(record) + "\n")


def load_calibration_records(path: str) -> Dict[int, CalibrationRecord]:
    """Read a records file; blank lines and '#' comments are ignored."""
    records: Dict[int, CalibrationRecord] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            record = parse_calibration_record(line)
            records[record.sensor_id] = record
    return records
