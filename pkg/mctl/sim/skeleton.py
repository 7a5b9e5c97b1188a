"""Scripted skeleton motion, ground truth and simulated joint tracking."""

from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from mctl.sim.scenario import Keyframe, NoiseConfig, ScenarioConfig, SensorSpec, true_pose
from mctl.utils.geometry import transform_to_client
from mctl.utils.models import (
    JointObservation,
    Point3,
    SensorPose,
    TrackingState,
    get_skeleton,
)


# T-pose in the server frame, cm; +y is up and the subject faces the sensors at negative z.
REST_POSE: Dict[str, List[float]] = {
    "head": [0.0, 75.0, 0.0],
    "neck": [0.0, 55.0, 0.0],
    "spine": [0.0, 20.0, 0.0],
    "left_shoulder": [-20.0, 50.0, 0.0],
    "right_shoulder": [20.0, 50.0, 0.0],
    "left_elbow": [-45.0, 50.0, 0.0],
    "right_elbow": [45.0, 50.0, 0.0],
    "left_wrist": [-70.0, 50.0, 0.0],
    "right_wrist": [70.0, 50.0, 0.0],
    "left_hip": [-12.0, 0.0, 0.0],
    "right_hip": [12.0, 0.0, 0.0],
    "left_knee": [-12.0, -42.0, 0.0],
    "right_knee": [12.0, -42.0, 0.0],
    "left_ankle": [-12.0, -85.0, 0.0],
    "right_ankle": [12.0, -85.0, 0.0],
}

ARMS_DOWN: Dict[str, List[float]] = {
    "left_elbow": [-22.0, 25.0, 0.0],
    "right_elbow": [22.0, 25.0, 0.0],
    "left_wrist": [-24.0, 0.0, 0.0],
    "right_wrist": [24.0, 0.0, 0.0],
}

SWING_HALF_PERIOD_TICKS = 15
WALK_SPEED_CM_PER_TICK = 1.5


def _swing(phase: int) -> Dict[str, List[float]]:
    sign = 1.0 if phase % 2 == 0 else -1.0
    return {
        "left_elbow": [-22.0, 28.0, -12.0 * sign],
        "left_wrist": [-24.0, 10.0, -30.0 * sign],
        "right_elbow": [22.0, 28.0, 12.0 * sign],
        "right_wrist": [24.0, 10.0, 30.0 * sign],
    }


def _stride(phase: int) -> Dict[str, List[float]]:
    sign = 1.0 if phase % 2 == 0 else -1.0
    pose = _swing(phase + 1)
    pose.update(
        {
            "left_knee": [-12.0, -42.0, -10.0 * sign],
            "left_ankle": [-12.0, -83.0, -20.0 * sign],
            "right_knee": [12.0, -42.0, 10.0 * sign],
            "right_ankle": [12.0, -83.0, 20.0 * sign],
        }
    )
    return pose


def _shifted(pose: Dict[str, List[float]], dx: float) -> Dict[str, List[float]]:
    return {joint: [p[0] + dx, p[1], p[2]] for joint, p in pose.items()}


def motion_keyframes(motion: str, ticks: int) -> List[Keyframe]:
    """Keyframes of a named motion covering ticks."""
    if motion == "static":
        return [Keyframe(tick=0, joints={})]
    if motion == "reach":
        return [
            Keyframe(tick=0, joints=dict(ARMS_DOWN)),
            Keyframe(tick=min(30, ticks), joints={
                **ARMS_DOWN,
                "right_elbow": [10.0, 35.0, -20.0],
                "right_wrist": [-15.0, 35.0, -35.0],
            }),
        ]

    frames: List[Keyframe] = []
    ticks_grid = range(0, ticks + SWING_HALF_PERIOD_TICKS, SWING_HALF_PERIOD_TICKS)
    for phase, tick in enumerate(ticks_grid):
        if motion == "arm_swing":
            frames.append(Keyframe(tick=tick, joints=_swing(phase)))
        elif motion == "walk":
            pose = {**REST_POSE, **_stride(phase)}
            frames.append(Keyframe(tick=tick, joints=_shifted(pose, WALK_SPEED_CM_PER_TICK * tick)))
        else:
            raise ValueError(f"unknown motion {motion!r}")
    return frames


def _keyframe_array(keyframe: Keyframe, joints: Sequence[str]) -> np.ndarray:
    return np.array(
        [keyframe.joints.get(joint, REST_POSE[joint]) for joint in joints], dtype=float
    )


def interpolate(keyframes: Sequence[Keyframe], joints: Sequence[str], tick: float) -> np.ndarray:
    """Piecewise-linear pose at a (fractional) tick, held constant past either end."""
    ordered = sorted(keyframes, key=lambda k: k.tick)
    if tick <= ordered[0].tick:
        return _keyframe_array(ordered[0], joints)
    for before, after in zip(ordered, ordered[1:]):
        if before.tick <= tick <= after.tick:
            span = after.tick - before.tick
            w = 0.0 if span == 0 else (tick - before.tick) / span
            return (1.0 - w) * _keyframe_array(before, joints) + w * _keyframe_array(after, joints)
    return _keyframe_array(ordered[-1], joints)


class GroundTruth(BaseModel):
    """True joint positions per tick plus true sensor poses and clock offsets."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    joints: List[str]
    positions: np.ndarray
    poses: Dict[int, SensorPose]
    clock_offsets: Dict[int, int]

    @property
    def ticks(self) -> int:
        return int(self.positions.shape[0])

    def position(self, tick: int, joint: str) -> Point3:
        return Point3.from_array(self.positions[tick, self.joints.index(joint)])

    def rows(self) -> List[Dict]:
        return [
            {"tick": tick, "joint_id": joint, "x": p[0], "y": p[1], "z": p[2]}
            for tick in range(self.ticks)
            for joint, p in zip(self.joints, self.positions[tick].tolist())
        ]


def generate_ground_truth(scenario: ScenarioConfig) -> GroundTruth:
    joints = get_skeleton(scenario.skeleton).joints
    keyframes = scenario.keyframes or motion_keyframes(scenario.motion, scenario.ticks)
    positions = np.stack([interpolate(keyframes, joints, t) for t in range(scenario.ticks)])
    positions.flags.writeable = False
    return GroundTruth(
        joints=list(joints),
        positions=positions,
        poses={spec.sensor_id: true_pose(spec) for spec in scenario.sensors},
        clock_offsets={spec.sensor_id: spec.clock_offset_ms for spec in scenario.sensors},
    )


def sensor_rng(seed: int, sensor_id: int, tick: int, stream: int = 0) -> np.random.Generator:
    """Independent generator per (seed, sensor, tick, stream)."""
    return np.random.default_rng([seed, sensor_id, tick, stream])


def _noisy(point: np.ndarray, noise: NoiseConfig, rng: np.random.Generator) -> np.ndarray:
    if noise.kind == "gaussian":
        if noise.sigma == 0.0:
            return point
        return point + rng.normal(0.0, noise.sigma, size=3)
    magnitude = rng.uniform(noise.low, noise.high) if noise.high > noise.low else noise.low
    if magnitude == 0.0:
        return point
    sign = 1.0 if rng.random() < 0.5 else -1.0
    # The sensor sits at the client origin, so the ray direction is the point itself.
    return point + sign * magnitude * point / np.linalg.norm(point)


def observe_skeleton(
    truth: GroundTruth,
    spec: SensorSpec,
    tick: int,
    noise: NoiseConfig,
    seed: int = 0,
    occluded: Sequence[str] = (),
    inferred_bias_cm: float = 10.0,
    pose: Optional[SensorPose] = None,
) -> List[JointObservation]:
    """What a sensor's body tracker reports for one tick, in its client frame.

    Scripted-occluded joints come back inferred and pushed inferred_bias_cm
    further along the view axis.
    """
    pose = pose or truth.poses[spec.sensor_id]
    rng = sensor_rng(seed, spec.sensor_id, tick)
    observations: List[JointObservation] = []
    for joint, server_point in zip(truth.joints, truth.positions[tick]):
        client = transform_to_client(Point3.from_array(server_point), pose).to_array()
        client = _noisy(client, noise, rng)
        state = TrackingState.TRACKED
        if joint in occluded:
            state = TrackingState.INFERRED
            client = client + np.array([0.0, 0.0, inferred_bias_cm])
        observations.append(
            JointObservation(
                joint=joint,
                position=Point3.from_array(client),
                tracking_state=state,
                sensor_id=spec.sensor_id,
            )
        )
    return observations
