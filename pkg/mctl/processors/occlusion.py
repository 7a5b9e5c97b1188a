"""Limb-crossing occlusion detection and observation selection.

The body is abstracted to limb segments. Two limbs that cross in the
sensor's projected view hide one another; the one farther from the sensor at
the crossing is occluded. The client reports occluded and inferred joints,
and the server keeps only trusted observations when any exist.
"""

from itertools import combinations
from typing import Callable, Container, Dict, List, Mapping, Optional, Sequence, Tuple

from dagster import get_dagster_logger
from pydantic import BaseModel, ConfigDict, model_validator

from mctl.processors.base_processor import BaseProcessor
from mctl.utils.errors import JointUnavailable, NotCrossingError
from mctl.utils.geometry import vector_product
from mctl.utils.metrics import track_metrics
from mctl.utils.models import (
    JointObservation,
    OcclusionReport,
    Point3,
    Skeleton,
    TrackingState,
)


logger = get_dagster_logger()

# Maps a client-frame point to (plane x, plane y, depth).
SensorView = Callable[[Point3], Tuple[float, float, float]]


def camera_plane_view(point: Point3) -> Tuple[float, float, float]:
    return point.x, point.y, point.z


class Segment2(BaseModel):
    """Projected limb segment with the depth of each endpoint."""

    model_config = ConfigDict(frozen=True)

    x1: float
    y1: float
    z1: float
    x2: float
    y2: float
    z2: float

    @model_validator(mode="after")
    def _distinct(self) -> "Segment2":
        if self.x1 == self.x2 and self.y1 == self.y2:
            raise ValueError("segment endpoints coincide")
        return self

    @classmethod
    def from_points(
        cls, a: Point3, b: Point3, view: SensorView = camera_plane_view
    ) -> "Segment2":
        x1, y1, z1 = view(a)
        x2, y2, z2 = view(b)
        return cls(x1=x1, y1=y1, z1=z1, x2=x2, y2=y2, z2=z2)


def _straddles(a: Segment2, b: Segment2) -> bool:
    """True when b's endpoints lie strictly on opposite sides of a's line."""
    dx, dy = a.x2 - a.x1, a.y2 - a.y1
    first = vector_product(b.x1 - a.x1, b.y1 - a.y1, dx, dy)
    second = vector_product(b.x2 - a.x1, b.y2 - a.y1, dx, dy)
    return first * second < 0


def segments_cross(a: Segment2, b: Segment2) -> bool:
    """Bounding boxes overlap and each segment strictly straddles the other."""
    return (
        max(a.x1, a.x2) >= min(b.x1, b.x2)
        and max(b.x1, b.x2) >= min(a.x1, a.x2)
        and max(a.y1, a.y2) >= min(b.y1, b.y2)
        and max(b.y1, b.y2) >= min(a.y1, a.y2)
        and _straddles(a, b)
        and _straddles(b, a)
    )


def crossing_depths(a: Segment2, b: Segment2) -> Tuple[float, float]:
    """Depth of each segment at the planar crossing point.

    The smaller depth belongs to the segment nearer the sensor.
    """
    if not segments_cross(a, b):
        raise NotCrossingError("crossing depths requested for segments that do not cross")
    dax, day = a.x2 - a.x1, a.y2 - a.y1
    dbx, dby = b.x2 - b.x1, b.y2 - b.y1
    denom = vector_product(dax, day, dbx, dby)
    ox, oy = b.x1 - a.x1, b.y1 - a.y1
    t = vector_product(ox, oy, dbx, dby) / denom
    s = vector_product(ox, oy, dax, day) / denom
    return a.z1 + t * (a.z2 - a.z1), b.z1 + s * (b.z2 - b.z1)


def detect_occlusions(
    observations: Sequence[JointObservation],
    skeleton: Skeleton,
    sensor_view: SensorView = camera_plane_view,
    sensor_id: Optional[int] = None,
) -> OcclusionReport:
    """Test every pair of limbs for a crossing in the sensor's view.

    Args:
        observations: Joint observations of one sensor, client frame
        skeleton: Skeleton whose limbs are tested
        sensor_view: Projection to (plane x, plane y, depth)
        sensor_id: Reporting sensor; defaults to the observations' sensor

    Returns:
        OcclusionReport with occluded, inferred and skipped entries
    """
    if sensor_id is None:
        sensor_id = observations[0].sensor_id if observations else 0
    positions = {obs.joint: obs.position for obs in observations}

    segments: List[Tuple[Tuple[str, str], Segment2]] = []
    skipped: List[Tuple[str, str]] = []
    for limb in skeleton.limbs:
        a, b = limb
        if a not in positions or b not in positions:
            skipped.append(limb)
            continue
        try:
            segments.append((limb, Segment2.from_points(positions[a], positions[b], sensor_view)))
        except ValueError:
            # Limb seen end-on.
            skipped.append(limb)

    occluded: List[str] = []
    count = 0
    for (limb_a, seg_a), (limb_b, seg_b) in combinations(segments, 2):
        if not segments_cross(seg_a, seg_b):
            continue
        count += 1
        z_a, z_b = crossing_depths(seg_a, seg_b)
        if z_a == z_b:
            continue
        hidden = limb_b if z_a < z_b else limb_a
        for joint in hidden:
            if joint not in occluded:
                occluded.append(joint)

    inferred = [
        obs.joint for obs in observations if obs.tracking_state is TrackingState.INFERRED
    ]
    if skipped:
        logger.debug(f"Sensor {sensor_id}: skipped limbs {skipped}")
    return OcclusionReport(
        sensor_id=sensor_id,
        occluded_joints=occluded,
        inferred_joints=inferred,
        intersection_count=count,
        skipped_limbs=skipped,
    )


def select_observations(
    reports: Mapping[int, OcclusionReport],
    observations: Mapping[int, Container[str]],
    joint: str,
    compensation: bool = True,
) -> List[int]:
    """Sensors whose observation of a joint enters fusion.

    Trusted sensors (joint neither occluded nor inferred) are all kept. If
    there are none, the single sensor with the fewest crossings wins, lowest
    sensor id first on ties. A sensor without a report counts as trusted.
    """
    reporting = sorted(sid for sid, joints in observations.items() if joint in joints)
    if not reporting:
        raise JointUnavailable(f"no sensor observed {joint} this frame")
    if not compensation:
        return reporting

    trusted = [
        sid for sid in reporting if sid not in reports or reports[sid].is_trusted(joint)
    ]
    if trusted:
        return trusted
    return [min(reporting, key=lambda sid: (reports[sid].intersection_count, sid))]


class OcclusionProcessor(BaseProcessor[Sequence[JointObservation], OcclusionReport]):
    """Client-side occlusion stage."""

    def __init__(
        self,
        skeleton: Skeleton,
        sensor_id: int,
        sensor_view: SensorView = camera_plane_view,
        name: str = "occlusion",
        description: str = "Flag joints hidden behind crossing limbs",
    ) -> None:
        super().__init__(name, description, {"skeleton": skeleton.name})
        self.skeleton = skeleton
        self.sensor_id = sensor_id
        self.sensor_view = sensor_view
        self.reported_crossings = 0

    @track_metrics
    def process(self, data: Sequence[JointObservation]) -> OcclusionReport:
        report = detect_occlusions(data, self.skeleton, self.sensor_view, self.sensor_id)
        self.reported_crossings += report.intersection_count
        if report.skipped_limbs:
            logger.warning(
                f"Sensor {self.sensor_id}: {len(report.skipped_limbs)} limbs skipped "
                f"(missing joints or seen end-on)"
            )
        return report


def selected_positions(
    reports: Mapping[int, OcclusionReport],
    frames: Mapping[int, Mapping[str, Point3]],
    joints: Sequence[str],
    compensation: bool = True,
) -> Dict[str, List[int]]:
    """Selection for every joint; joints nobody observed map to an empty list."""
    selection: Dict[str, List[int]] = {}
    for joint in joints:
        try:
            selection[joint] = select_observations(reports, frames, joint, compensation)
        except JointUnavailable:
            selection[joint] = []
    return selection
