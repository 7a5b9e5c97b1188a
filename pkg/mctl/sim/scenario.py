"""Scenario configuration for simulated capture sessions."""

from typing import Dict, List, Optional

from dagster import Config, get_dagster_logger
from pydantic import Field, field_validator, model_validator

from mctl.utils.config import build_config, read_toml
from mctl.utils.errors import ConfigError
from mctl.utils.geometry import normalize_angle, rotate_z
from mctl.utils.models import SKELETONS, CalibrationRecord, Point3, SensorPose


logger = get_dagster_logger()

MOTIONS = ("static", "arm_swing", "walk", "reach")
NOISE_KINDS = ("gaussian", "uniform_range")
CALIBRATION_SOURCES = ("wand", "ground_truth")


class SensorSpec(Config):
    """Ground-truth placement of one simulated sensor."""

    sensor_id: int = Field(..., ge=1, le=0xFFFF)
    position: List[float] = Field(..., description="Optical center in the server frame, cm")
    theta: float = Field(0.0, description="Yaw about the shared z-axis, radians")
    clock_offset_ms: int = Field(0, description="Sensor clock minus server clock")

    @field_validator("position")
    @classmethod
    def _three(cls, value: List[float]) -> List[float]:
        if len(value) != 3:
            raise ValueError("position needs three coordinates")
        return value


class NoiseConfig(Config):
    kind: str = "gaussian"
    sigma: float = Field(0.0, ge=0)
    low: float = Field(0.0, ge=0)
    high: float = Field(0.0, ge=0)


class DelayConfig(Config):
    """One-way network delay model, ms."""

    base_ms: float = Field(5.0, ge=0)
    jitter_ms: float = Field(0.0, ge=0)
    asymmetry_ms: float = 0.0
    spike_probability: float = Field(0.0, ge=0, le=1)
    spike_ms: float = Field(50.0, ge=0)
    disconnect_probability: float = Field(0.0, ge=0, le=1)
    reconnect_ms: float = Field(500.0, ge=0)


class OcclusionScript(Config):
    """Joints a sensor only infers between two ticks."""

    sensor_id: int
    joints: List[str]
    start_tick: int = 0
    end_tick: Optional[int] = None

    def active(self, tick: int) -> bool:
        return tick >= self.start_tick and (self.end_tick is None or tick < self.end_tick)


class Keyframe(Config):
    """Joint positions at one tick, server frame; unnamed joints keep the rest pose."""

    tick: int = Field(..., ge=0)
    joints: Dict[str, List[float]] = {}


def default_sensors() -> List[SensorSpec]:
    return [
        SensorSpec(sensor_id=1, position=[-60.0, -50.0, -220.0], theta=0.35, clock_offset_ms=0),
        SensorSpec(sensor_id=2, position=[80.0, -40.0, -250.0], theta=-1.1, clock_offset_ms=140),
        SensorSpec(sensor_id=3, position=[-110.0, 70.0, -300.0], theta=2.2, clock_offset_ms=-90),
        SensorSpec(sensor_id=4, position=[120.0, 60.0, -290.0], theta=-2.7, clock_offset_ms=35),
    ]


class ScenarioConfig(Config):
    """Everything that defines a simulated run; the seed fixes all randomness."""

    name: str = "default"
    seed: int = 0
    fps: float = Field(30.0, gt=0)
    ticks: int = Field(300, ge=1)
    skeleton: str = "default"
    motion: str = "static"
    keyframes: List[Keyframe] = []
    sensors: List[SensorSpec] = default_sensors()
    noise: NoiseConfig = NoiseConfig()
    delay: DelayConfig = DelayConfig()
    occlusions: List[OcclusionScript] = []
    inferred_bias_cm: float = 10.0
    capture_lead_ms: float = Field(15.0, ge=0)
    wand_radius_cm: float = Field(5.0, gt=0)
    wand_trajectory_cm: float = Field(40.0, gt=0)
    depth_noise_cm: float = Field(0.0, ge=0)
    calibration: str = "wand"
    calibration_samples: int = Field(5, ge=3)
    sync_period_ms: float = Field(1000.0, gt=0)
    sync_warmup: int = Field(3, ge=1)
    setup_timeout_ms: float = Field(30000.0, gt=0)
    occlusion_compensation: bool = True
    solver: str = "nonlinear"

    @model_validator(mode="after")
    def _check(self) -> "ScenarioConfig":
        if self.skeleton not in SKELETONS:
            raise ValueError(f"unknown skeleton {self.skeleton!r}")
        if self.motion not in MOTIONS:
            raise ValueError(f"motion must be one of {MOTIONS}")
        if self.noise.kind not in NOISE_KINDS:
            raise ValueError(f"noise kind must be one of {NOISE_KINDS}")
        if self.calibration not in CALIBRATION_SOURCES:
            raise ValueError(f"calibration must be one of {CALIBRATION_SOURCES}")
        if self.solver not in ("nonlinear", "linear"):
            raise ValueError("solver must be nonlinear or linear")
        ids = [s.sensor_id for s in self.sensors]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate sensor ids")
        joints = set(SKELETONS[self.skeleton].joints)
        for script in self.occlusions:
            if script.sensor_id not in ids:
                raise ValueError(f"occlusion script names unknown sensor {script.sensor_id}")
            unknown = set(script.joints) - joints
            if unknown:
                raise ValueError(f"occlusion script names unknown joints {sorted(unknown)}")
        return self

    @property
    def period_ms(self) -> float:
        return 1000.0 / self.fps

    def sensor(self, sensor_id: int) -> SensorSpec:
        for spec in self.sensors:
            if spec.sensor_id == sensor_id:
                return spec
        raise KeyError(sensor_id)

    def occluded_joints(self, sensor_id: int, tick: int) -> List[str]:
        joints: List[str] = []
        for script in self.occlusions:
            if script.sensor_id == sensor_id and script.active(tick):
                joints.extend(j for j in script.joints if j not in joints)
        return joints


def true_pose(spec: SensorSpec) -> SensorPose:
    """Pose that puts the sensor's optical center at spec.position."""
    theta = normalize_angle(spec.theta)
    x, y = rotate_z(-spec.position[0], -spec.position[1], -theta)
    return SensorPose(
        origin_in_client=Point3(x=x, y=y, z=-spec.position[2]),
        yaw_theta=theta,
    )


def true_records(scenario: ScenarioConfig) -> Dict[int, CalibrationRecord]:
    return {
        spec.sensor_id: CalibrationRecord(
            sensor_id=spec.sensor_id, pose=true_pose(spec), sample_count=0, residual_spread=0.0
        )
        for spec in scenario.sensors
    }


def wand_placement(scenario: ScenarioConfig, placement: int) -> Point3:
    """Wand center of a placement in the server frame; the trajectory runs along +y."""
    return Point3(x=0.0, y=scenario.wand_trajectory_cm * placement, z=0.0)


def pose_error(estimated: SensorPose, truth: SensorPose) -> Dict[str, float]:
    return {
        "theta_error_rad": abs(normalize_angle(estimated.yaw_theta - truth.yaw_theta)),
        "origin_error_cm": estimated.origin_in_client.distance_to(truth.origin_in_client),
    }


def load_scenario(path: Optional[str] = None, **overrides: object) -> ScenarioConfig:
    """Read a scenario TOML file; keyword overrides replace top-level keys."""
    values: Dict[str, object] = read_toml(path) if path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    scenario = build_config(ScenarioConfig, values, source=f"scenario {path or '<default>'}")
    if any(s.position[2] >= 0 for s in scenario.sensors):
        raise ConfigError("sensors must sit in front of the subject, at negative server z")
    logger.info(f"Loaded scenario {scenario.name!r} with {len(scenario.sensors)} sensors")
    return scenario
