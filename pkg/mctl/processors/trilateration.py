"""Joint fusion by nonlinear least-squares trilateration.

Each sensor contributes a range constraint: the distance from its optical
center to the joint it observed. The fused joint minimizes the sum of squared
range residuals, solved with Gauss-Newton steps whose 3x3 normal matrix is
inverted through its adjugate.
"""

from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from dagster import Config, get_dagster_logger
from pydantic import BaseModel, ConfigDict, Field

from mctl.processors.base_processor import BaseProcessor
from mctl.utils.errors import (
    SingularMatrixError,
    SingularPointError,
    UnderdeterminedError,
)
from mctl.utils.metrics import track_metrics
from mctl.utils.models import FusedJoint, Initializer, Point3


logger = get_dagster_logger()

SENSOR_NUDGE_CM = 1e-3


class SolverConfig(Config):
    """Configuration for the Gauss-Newton solver."""

    c_threshold: float = Field(default=1e-4, gt=0)
    max_iterations: int = Field(default=100, ge=1)
    singular_det_epsilon: float = 1e-12
    max_halvings: int = 8


class RangeConstraint(BaseModel):
    """Measured distance from one sensor to the joint."""

    model_config = ConfigDict(frozen=True)

    sensor_position: Point3
    range: float = Field(..., gt=0)


class RangeSolution(NamedTuple):
    position: np.ndarray
    objective: float
    iterations: int
    converged: bool
    singular: bool
    initializer: Initializer


# Observation of one joint by one sensor: (sensor position, observed joint), both server frame.
SensorObservation = Tuple[Point3, Point3]


def constraint_arrays(constraints: Sequence[RangeConstraint]) -> Tuple[np.ndarray, np.ndarray]:
    sensors = np.array(
        [[c.sensor_position.x, c.sensor_position.y, c.sensor_position.z] for c in constraints],
        dtype=float,
    ).reshape(-1, 3)
    ranges = np.array([c.range for c in constraints], dtype=float)
    return sensors, ranges


def residual(point: Point3, constraint: RangeConstraint) -> float:
    """Distance to the sensor minus the measured range."""
    distance = point.distance_to(constraint.sensor_position)
    if distance == 0.0:
        raise SingularPointError("point coincides with a sensor position")
    return distance - constraint.range


def objective_ranges(point: np.ndarray, sensors: np.ndarray, ranges: np.ndarray) -> float:
    diff = point - sensors
    distances = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    return float(np.sum((distances - ranges) ** 2))


def objective(point: Point3, constraints: Sequence[RangeConstraint]) -> float:
    """Sum of squared range residuals."""
    return float(sum(residual(point, c) ** 2 for c in constraints))


def normal_system_ranges(
    point: np.ndarray, sensors: np.ndarray, ranges: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    diff = point - sensors
    distances = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    if np.any(distances == 0.0):
        raise SingularPointError("point coincides with a sensor position")
    residuals = distances - ranges
    jacobian = diff / distances[:, None]
    return jacobian.T @ jacobian, jacobian.T @ residuals


def normal_system(
    point: Point3, constraints: Sequence[RangeConstraint]
) -> Tuple[np.ndarray, np.ndarray]:
    """JtJ and Jtf of the range residuals at a point."""
    sensors, ranges = constraint_arrays(constraints)
    return normal_system_ranges(point.to_array(), sensors, ranges)


def gradient(point: Point3, constraints: Sequence[RangeConstraint]) -> np.ndarray:
    """Analytic gradient of the objective, 2 Jt f."""
    _, jtf = normal_system(point, constraints)
    return 2.0 * jtf


def invert_3x3_adjugate(matrix: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Inverse of a 3x3 matrix as adjugate over determinant."""
    (m00, m01, m02), (m10, m11, m12), (m20, m21, m22) = np.asarray(matrix, dtype=float).tolist()

    c00 = m11 * m22 - m12 * m21
    c01 = m12 * m20 - m10 * m22
    c02 = m10 * m21 - m11 * m20
    det = m00 * c00 + m01 * c01 + m02 * c02
    if abs(det) <= eps:
        raise SingularMatrixError(f"singular normal matrix (det={det:.3e})")

    c10 = m02 * m21 - m01 * m22
    c11 = m00 * m22 - m02 * m20
    c12 = m01 * m20 - m00 * m21
    c20 = m01 * m12 - m02 * m11
    c21 = m02 * m10 - m00 * m12
    c22 = m00 * m11 - m01 * m10

    adjugate = np.array(
        [
            [c00, c10, c20],
            [c01, c11, c21],
            [c02, c12, c22],
        ]
    )
    return adjugate / det


def linear_init_ranges(sensors: np.ndarray, ranges: np.ndarray) -> Tuple[np.ndarray, Initializer]:
    centroid = sensors.mean(axis=0)
    if len(sensors) < 4:
        return centroid, Initializer.CENTROID

    offsets = sensors[1:] - sensors[0]
    design = 2.0 * offsets
    rhs = np.einsum("ij,ij->i", offsets, offsets) + ranges[0] ** 2 - ranges[1:] ** 2
    if np.linalg.matrix_rank(design) < 3:
        return centroid, Initializer.CENTROID

    shifted = np.linalg.solve(design.T @ design, design.T @ rhs)
    return sensors[0] + shifted, Initializer.LINEAR_LS


def linear_init(constraints: Sequence[RangeConstraint]) -> Tuple[Point3, Initializer]:
    """Linear least-squares position from differenced sphere equations."""
    sensors, ranges = constraint_arrays(constraints)
    position, initializer = linear_init_ranges(sensors, ranges)
    return Point3.from_array(position), initializer


def _nudge_off_sensors(point: np.ndarray, sensors: np.ndarray) -> np.ndarray:
    diff = point - sensors
    if np.any(np.einsum("ij,ij->i", diff, diff) == 0.0):
        return point + np.array([SENSOR_NUDGE_CM, SENSOR_NUDGE_CM, SENSOR_NUDGE_CM])
    return point


def solve_ranges(
    sensors: np.ndarray,
    ranges: np.ndarray,
    config: SolverConfig,
    warm_start: Optional[np.ndarray] = None,
    warm_start_kind: Initializer = Initializer.PREVIOUS,
) -> RangeSolution:
    """Gauss-Newton iteration over raw arrays; the hot path of solve()."""
    if len(sensors) < 3:
        raise UnderdeterminedError(f"need at least 3 range constraints, got {len(sensors)}")

    if warm_start is not None:
        point = np.array(warm_start, dtype=float)
        initializer = warm_start_kind
    else:
        point, initializer = linear_init_ranges(sensors, ranges)

    point = _nudge_off_sensors(point, sensors)
    current = objective_ranges(point, sensors, ranges)
    iterations = 0
    converged = False
    singular = False

    while iterations < config.max_iterations:
        try:
            jtj, jtf = normal_system_ranges(point, sensors, ranges)
            step = invert_3x3_adjugate(jtj, config.singular_det_epsilon) @ jtf
        except SingularMatrixError:
            singular = True
            break
        except SingularPointError:
            point = _nudge_off_sensors(point, sensors)
            continue

        scale = 1.0
        for _ in range(config.max_halvings + 1):
            candidate = point - scale * step
            trial = objective_ranges(candidate, sensors, ranges)
            if trial <= current:
                break
            scale *= 0.5
        else:
            # Every halved step still increases the objective.
            break

        iterations += 1
        improvement = current - trial
        point = candidate
        current = trial
        if abs(improvement) < config.c_threshold:
            converged = True
            break

    return RangeSolution(point, current, iterations, converged, singular, initializer)


def solve(
    constraints: Sequence[RangeConstraint],
    config: Optional[SolverConfig] = None,
    warm_start: Optional[Point3] = None,
    warm_start_kind: Initializer = Initializer.PREVIOUS,
) -> FusedJoint:
    """Minimize the squared range residuals with damped Newton iteration."""
    config = config or SolverConfig()
    sensors, ranges = constraint_arrays(constraints)
    solution = solve_ranges(
        sensors,
        ranges,
        config,
        warm_start=None if warm_start is None else warm_start.to_array(),
        warm_start_kind=warm_start_kind,
    )
    if solution.singular:
        logger.debug(f"Singular normal matrix after {solution.iterations} iterations")
    return FusedJoint(
        position=Point3.from_array(solution.position),
        final_objective=solution.objective,
        iterations=solution.iterations,
        initializer=solution.initializer,
        converged=solution.converged,
        singular=solution.singular,
        sensor_count=len(constraints),
    )


def _observation_arrays(
    observations: Sequence[SensorObservation],
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    sensors = np.array([s.to_array() for s, _ in observations], dtype=float)
    joints = np.array([j.to_array() for _, j in observations], dtype=float)
    ranges = np.linalg.norm(joints - sensors, axis=1)
    return sensors, joints, ranges


def _mean_fallback(sensors: np.ndarray, joints: np.ndarray, ranges: np.ndarray) -> FusedJoint:
    mean = joints.mean(axis=0)
    return FusedJoint(
        position=Point3.from_array(mean),
        final_objective=objective_ranges(mean, sensors, ranges),
        iterations=0,
        initializer=Initializer.CENTROID,
        trilaterated=False,
        sensor_count=len(joints),
    )


def fuse_joint(
    observations: Sequence[SensorObservation],
    config: Optional[SolverConfig] = None,
    warm_start: Optional[Point3] = None,
    solver: str = "nonlinear",
) -> FusedJoint:
    """Fuse one joint seen by several sensors into a single position.

    Args:
        observations: (sensor position, observed joint position) pairs in the server frame
        config: Solver configuration
        warm_start: Previous-frame result for this joint
        solver: "nonlinear" for Newton iteration, "linear" for the linear baseline

    Returns:
        FusedJoint; non-trilaterated when fewer than three sensors survive
    """
    if not observations:
        raise UnderdeterminedError("no observations to fuse")
    config = config or SolverConfig()
    sensors, joints, ranges = _observation_arrays(observations)

    if len(observations) < 3 or np.any(ranges <= 0.0):
        return _mean_fallback(sensors, joints, ranges)

    if solver == "linear":
        position, initializer = linear_init_ranges(sensors, ranges)
        if initializer is not Initializer.LINEAR_LS:
            return _mean_fallback(sensors, joints, ranges)
        return FusedJoint(
            position=Point3.from_array(position),
            final_objective=objective_ranges(position, sensors, ranges),
            iterations=0,
            initializer=initializer,
            sensor_count=len(observations),
        )

    start: Optional[np.ndarray] = None
    kind = Initializer.PREVIOUS
    if warm_start is not None:
        start = warm_start.to_array()
    else:
        position, initializer = linear_init_ranges(sensors, ranges)
        if initializer is Initializer.LINEAR_LS:
            start, kind = position, Initializer.LINEAR_LS
        else:
            start, kind = joints.mean(axis=0), Initializer.CENTROID

    solution = solve_ranges(sensors, ranges, config, warm_start=start, warm_start_kind=kind)
    return FusedJoint(
        position=Point3.from_array(solution.position),
        final_objective=solution.objective,
        iterations=solution.iterations,
        initializer=solution.initializer,
        converged=solution.converged,
        singular=solution.singular,
        sensor_count=len(observations),
    )


class FusedSkeleton(BaseModel):
    """Fusion result of one server tick."""

    joints: Dict[str, FusedJoint] = Field(default_factory=dict)
    unavailable: List[str] = Field(default_factory=list)


class JointFusionProcessor(BaseProcessor[Dict[str, List[SensorObservation]], FusedSkeleton]):
    """Server-side fusion stage; owns the per-joint warm-start state."""

    def __init__(
        self,
        solver_config: Optional[SolverConfig] = None,
        solver: str = "nonlinear",
        name: str = "joint_fusion",
        description: str = "Trilaterate every joint from the selected sensors",
    ) -> None:
        super().__init__(name, description, {"solver": solver})
        self.solver_config = solver_config or SolverConfig()
        self.solver = solver
        self.previous: Dict[str, Point3] = {}

    @track_metrics
    def process(self, data: Dict[str, List[SensorObservation]]) -> FusedSkeleton:
        """Fuse every joint that has at least one selected observation.

        Args:
            data: Selected (sensor position, joint position) pairs per joint

        Returns:
            FusedSkeleton for this tick
        """
        result = FusedSkeleton()
        for joint, observations in data.items():
            if not observations:
                result.unavailable.append(joint)
                continue
            fused = fuse_joint(
                observations,
                self.solver_config,
                warm_start=self.previous.get(joint),
                solver=self.solver,
            )
            self.previous[joint] = fused.position
            result.joints[joint] = fused
        return result

    def reset(self) -> None:
        self.previous.clear()
