"""Ingestor backed by the motion-capture simulator."""

from typing import Any, Dict, List, Optional

from dagster import get_dagster_logger

from mctl.ingestors.base_ingestor import BaseIngestor
from mctl.sim.depth import render_wand_depth
from mctl.sim.scenario import ScenarioConfig, wand_placement
from mctl.sim.skeleton import GroundTruth, generate_ground_truth, observe_skeleton, sensor_rng
from mctl.utils.models import DepthFrame, JointObservation


logger = get_dagster_logger()

DEPTH_STREAM = 1


class SimulatedSensorIngestor(BaseIngestor):
    """One simulated depth sensor of a scenario."""

    def __init__(
        self,
        scenario: ScenarioConfig,
        sensor_id: int,
        truth: Optional[GroundTruth] = None,
        config: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(
            name=f"sim_sensor_{sensor_id}",
            description=f"Simulated sensor {sensor_id} of scenario {scenario.name}",
            sensor_id=sensor_id,
            config=config,
        )
        self.scenario = scenario
        self.spec = scenario.sensor(sensor_id)
        self.truth = truth or generate_ground_truth(scenario)

    def ingest(self, tick: int) -> List[JointObservation]:
        """Observations of a tick; ticks past the script repeat its last pose.

        Args:
            tick: Observation tick index

        Returns:
            List of JointObservation objects in the client frame
        """
        tick = min(max(tick, 0), self.truth.ticks - 1)
        return observe_skeleton(
            self.truth,
            self.spec,
            tick,
            self.scenario.noise,
            seed=self.scenario.seed,
            occluded=self.scenario.occluded_joints(self.sensor_id, tick),
            inferred_bias_cm=self.scenario.inferred_bias_cm,
        )

    def capture_depth(self, placement: int, sample: int = 0) -> DepthFrame:
        """Render the wand at a placement as this sensor sees it.

        Args:
            placement: Wand placement index (0 or 1)
            sample: Capture index within the placement

        Returns:
            Depth frame decoded from the sensor's millimeter counts
        """
        frame = render_wand_depth(
            wand_placement(self.scenario, placement),
            self.truth.poses[self.sensor_id],
            radius_cm=self.scenario.wand_radius_cm,
            noise_cm=self.scenario.depth_noise_cm,
            rng=sensor_rng(self.scenario.seed, self.sensor_id, placement, DEPTH_STREAM + sample),
        )
        if frame.out_of_range:
            logger.warning(f"Sensor {self.sensor_id}: wand placement {placement} is out of view")
        # The sensor reports whole millimeters.
        return DepthFrame.from_millimeters(
            frame.to_millimeters(),
            frame_timestamp=frame.frame_timestamp,
            out_of_range=frame.out_of_range,
        )
