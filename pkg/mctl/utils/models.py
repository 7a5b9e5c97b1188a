"""Data models for the mctl pipeline."""

import math
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from mctl.utils.errors import ConfigError, DomainError


DEPTH_WIDTH = 512
DEPTH_HEIGHT = 424
MIN_DEPTH_CM = 50.0
MAX_DEPTH_CM = 650.0


class TrackingState(str, Enum):
    """Tracking state reported by a sensor for a joint."""

    TRACKED = "tracked"
    INFERRED = "inferred"


class Initializer(str, Enum):
    """Where the solver took its starting point from."""

    LINEAR_LS = "linear_ls"
    PREVIOUS = "previous"
    CENTROID = "centroid"


class MetricsData(BaseModel):
    """Metrics data for tracking performance."""

    execution_time_ms: float = 0.0
    call_count: int = 1
    errors: int = 0


class Point3(BaseModel):
    """A point in centimeters."""

    model_config = ConfigDict(frozen=True)

    x: float
    y: float
    z: float

    @field_validator("x", "y", "z")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("coordinates must be finite")
        return value

    @classmethod
    def from_array(cls, values: np.ndarray) -> "Point3":
        return cls(x=float(values[0]), y=float(values[1]), z=float(values[2]))

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def distance_to(self, other: "Point3") -> float:
        return math.sqrt(
            (self.x - other.x) ** 2 + (self.y - other.y) ** 2 + (self.z - other.z) ** 2
        )


ORIGIN = Point3(x=0.0, y=0.0, z=0.0)


class Pixel(BaseModel):
    """Integer pixel coordinates in the depth grid."""

    model_config = ConfigDict(frozen=True)

    u: int = Field(..., ge=0, lt=DEPTH_WIDTH, description="Column index")
    v: int = Field(..., ge=0, lt=DEPTH_HEIGHT, description="Row index")


class DepthFrame(BaseModel):
    """A 512x424 depth image in centimeters, indexed as samples[v, u]."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    samples: np.ndarray
    frame_timestamp: int = 0
    out_of_range: bool = False

    @field_validator("samples")
    @classmethod
    def _check_samples(cls, samples: np.ndarray) -> np.ndarray:
        samples = np.array(samples, dtype=float)
        if samples.shape != (DEPTH_HEIGHT, DEPTH_WIDTH):
            raise ValueError(
                f"depth frame must be {DEPTH_HEIGHT}x{DEPTH_WIDTH}, got {samples.shape}"
            )
        if np.any(samples < 0) or not np.all(np.isfinite(samples)):
            raise ValueError("depth samples must be finite and non-negative")
        samples.flags.writeable = False
        return samples

    @property
    def width(self) -> int:
        return DEPTH_WIDTH

    @property
    def height(self) -> int:
        return DEPTH_HEIGHT

    def sample(self, pixel: Pixel) -> float:
        return float(self.samples[pixel.v, pixel.u])

    def to_millimeters(self) -> np.ndarray:
        """Unsigned 16-bit millimeter counts, the sensor payload format."""
        return np.clip(np.rint(self.samples * 10.0), 0, 65535).astype(np.uint16)

    @classmethod
    def from_millimeters(
        cls, counts: np.ndarray, frame_timestamp: int = 0, out_of_range: bool = False
    ) -> "DepthFrame":
        return cls(
            samples=np.asarray(counts, dtype=float) / 10.0,
            frame_timestamp=frame_timestamp,
            out_of_range=out_of_range,
        )


class SensorPose(BaseModel):
    """Registration of a client sensor relative to the server frame."""

    model_config = ConfigDict(frozen=True)

    origin_in_client: Point3 = Field(..., description="Wand center in the client frame")
    yaw_theta: float = Field(..., description="Rotation about the shared z-axis, radians")

    @field_validator("yaw_theta")
    @classmethod
    def _yaw_range(cls, value: float) -> float:
        if not -math.pi < value <= math.pi:
            raise ValueError(f"yaw_theta must lie in (-pi, pi], got {value}")
        return value


class Skeleton(BaseModel):
    """Joint list plus limb adjacency."""

    model_config = ConfigDict(frozen=True)

    name: str
    joints: List[str]
    limbs: List[Tuple[str, str]]

    @model_validator(mode="after")
    def _check_limbs(self) -> "Skeleton":
        if len(set(self.joints)) != len(self.joints):
            raise ValueError("duplicate joint names")
        members = set(self.joints)
        seen = set()
        for a, b in self.limbs:
            if a not in members or b not in members:
                raise ValueError(f"limb ({a}, {b}) references an unknown joint")
            key = frozenset((a, b))
            if key in seen or a == b:
                raise ValueError(f"duplicate or degenerate limb ({a}, {b})")
            seen.add(key)
        return self

    def index_of(self, joint: str) -> int:
        try:
            return self.joints.index(joint)
        except ValueError:
            raise DomainError(f"joint {joint!r} is not part of skeleton {self.name!r}")

    def __contains__(self, joint: object) -> bool:
        return joint in self.joints


DEFAULT_JOINTS = [
    "head",
    "neck",
    "spine",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
]

DEFAULT_LIMBS = [
    ("head", "neck"),
    ("neck", "left_shoulder"),
    ("neck", "right_shoulder"),
    ("left_shoulder", "left_elbow"),
    ("left_elbow", "left_wrist"),
    ("right_shoulder", "right_elbow"),
    ("right_elbow", "right_wrist"),
    ("neck", "spine"),
    ("spine", "left_hip"),
    ("spine", "right_hip"),
    ("left_hip", "left_knee"),
    ("left_knee", "left_ankle"),
    ("right_hip", "right_knee"),
    ("right_knee", "right_ankle"),
]

SKELETONS: Dict[str, Skeleton] = {
    "default": Skeleton(name="default", joints=DEFAULT_JOINTS, limbs=DEFAULT_LIMBS),
    "upper_body": Skeleton(
        name="upper_body",
        joints=DEFAULT_JOINTS[:9],
        limbs=DEFAULT_LIMBS[:8],
    ),
}

JOINT_GROUPS: Dict[str, List[str]] = {
    "arm": [
        "left_shoulder",
        "right_shoulder",
        "left_elbow",
        "right_elbow",
        "left_wrist",
        "right_wrist",
    ],
    "leg": ["left_hip", "right_hip", "left_knee", "right_knee", "left_ankle", "right_ankle"],
}


def get_skeleton(name: str) -> Skeleton:
    """Look up a named skeleton."""
    try:
        return SKELETONS[name]
    except KeyError:
        raise ConfigError(f"unknown skeleton {name!r}; known: {sorted(SKELETONS)}")


class JointObservation(BaseModel):
    """One joint position seen by one sensor, in that sensor's client frame."""

    model_config = ConfigDict(frozen=True)

    joint: str
    position: Point3
    tracking_state: TrackingState = TrackingState.TRACKED
    sensor_id: int = Field(..., ge=0, le=0xFFFF)
    client_timestamp: int = 0


class OcclusionReport(BaseModel):
    """Occlusion findings of one sensor for one observation tick."""

    sensor_id: int
    occluded_joints: List[str] = Field(default_factory=list)
    inferred_joints: List[str] = Field(default_factory=list)
    intersection_count: int = Field(0, ge=0)
    skipped_limbs: List[Tuple[str, str]] = Field(default_factory=list)

    def is_trusted(self, joint: str) -> bool:
        return joint not in self.occluded_joints and joint not in self.inferred_joints


class ObservationFrame(BaseModel):
    """Everything one client sends for one observation tick."""

    sensor_id: int
    client_timestamp: int
    observations: List[JointObservation]
    report: Optional[OcclusionReport] = None

    def by_joint(self) -> Dict[str, JointObservation]:
        return {obs.joint: obs for obs in self.observations}


class WandDetection(BaseModel):
    """Located calibration wand in one depth frame."""

    model_config = ConfigDict(frozen=True)

    bbox_ul: Pixel
    bbox_br: Pixel
    center_pixel: Pixel
    center_point: Point3 = Field(..., description="Wand center, client frame")
    radius_cm: float = Field(..., gt=0)
    partial: bool = False

    @model_validator(mode="after")
    def _check_bbox(self) -> "WandDetection":
        if self.bbox_ul.u > self.bbox_br.u or self.bbox_ul.v > self.bbox_br.v:
            raise ValueError("bbox_ul must not exceed bbox_br")
        return self


class CalibrationRecord(BaseModel):
    """Registered pose of one sensor."""

    sensor_id: int
    pose: SensorPose
    sample_count: int = Field(..., ge=0)
    residual_spread: float = Field(..., ge=0)


class FusedJoint(BaseModel):
    """Fused position of one joint."""

    position: Point3
    final_objective: float = Field(..., ge=0, description="Sum of squared residuals, cm^2")
    iterations: int = Field(0, ge=0)
    initializer: Initializer = Initializer.LINEAR_LS
    trilaterated: bool = True
    singular: bool = False
    converged: bool = True
    sensor_count: int = 0

    def flags(self) -> str:
        tokens = [self.initializer.value]
        if not self.trilaterated:
            tokens.append("fallback")
        if self.singular:
            tokens.append("singular")
        if not self.converged:
            tokens.append("unconverged")
        return ";".join(tokens)


class SyncExchange(BaseModel):
    """Four timestamps of one sync round trip, integer milliseconds."""

    model_config = ConfigDict(frozen=True)

    t1: int = Field(..., description="Server send, server clock")
    t2: int = Field(..., description="Client receive, client clock")
    t3: int = Field(..., description="Client reply, client clock")
    t4: int = Field(..., description="Server receive, server clock")

    @model_validator(mode="after")
    def _ordering(self) -> "SyncExchange":
        if self.t4 < self.t1 or self.t3 < self.t2:
            raise ValueError("exchange timestamps out of order")
        return self


class SyncState(BaseModel):
    """Smoothed delay and clock error of one client."""

    model_config = ConfigDict(frozen=True)

    sensor_id: int
    delay_d: Optional[float] = None
    clock_error_e: Optional[float] = Field(
        None, description="Server clock minus client clock, ms"
    )
    history: List[SyncExchange] = Field(default_factory=list)
    window: int = 5

    @property
    def initialized(self) -> bool:
        return self.delay_d is not None and self.clock_error_e is not None
