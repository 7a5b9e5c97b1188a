"""Base ingestor class for all sensor data sources."""

from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional

from dagster import get_dagster_logger

from mctl.utils.metrics import track_metrics
from mctl.utils.models import DepthFrame, JointObservation, ObservationFrame


logger = get_dagster_logger()


class BaseIngestor(ABC):
    """Base class for all ingestors.

    An ingestor stands for one depth sensor: it yields the sensor's joint
    observations per observation tick and raw depth frames of the
    calibration wand.
    """

    name: str
    description: str
    sensor_id: int

    def __init__(
        self,
        name: str,
        description: str,
        sensor_id: int,
        config: Optional[Dict[str, Any]] = None,
    ) -> None:
        """Initialize the ingestor.

        Args:
            name: Ingestor name
            description: Ingestor description
            sensor_id: Sensor this ingestor reads from
            config: Configuration dictionary
        """
        self.name = name
        self.description = description
        self.sensor_id = sensor_id
        self.config = config or {}

    @abstractmethod
    def ingest(self, tick: int) -> List[JointObservation]:
        """Joint observations of one tick, in the sensor's client frame.

        Args:
            tick: Observation tick index

        Returns:
            List of JointObservation objects
        """

    @abstractmethod
    def capture_depth(self, placement: int, sample: int = 0) -> DepthFrame:
        """One depth frame of the calibration wand.

        Args:
            placement: Wand placement index (0 or 1)
            sample: Capture index within the placement

        Returns:
            Raw depth frame
        """

    @track_metrics
    def create_frame(self, tick: int, client_timestamp: int) -> ObservationFrame:
        """Wrap one tick of observations for transmission.

        Args:
            tick: Observation tick index
            client_timestamp: Capture time on the sensor clock, ms

        Returns:
            ObservationFrame without an occlusion report
        """
        observations = [
            obs.model_copy(update={"client_timestamp": client_timestamp})
            for obs in self.ingest(tick)
        ]
        return ObservationFrame(
            sensor_id=self.sensor_id,
            client_timestamp=client_timestamp,
            observations=observations,
        )
