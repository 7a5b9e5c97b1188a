"""Per-client server state and the session registry."""

from collections import deque
from typing import Deque, Dict, Iterator, List, Optional

from dagster import get_dagster_logger
from pydantic import BaseModel, ConfigDict, Field

from mctl.processors.timesync import BufferedFrame
from mctl.utils.models import CalibrationRecord, SyncState, WandDetection


logger = get_dagster_logger()

MAX_SENSOR_ID = 0xFFFF


class SessionStats(BaseModel):
    received: int = 0
    admitted: int = 0
    stale: int = 0
    superfluous: int = 0
    sync_exchanges: int = 0
    sync_rejected: int = 0
    reconnects: int = 0


class ServerSession(BaseModel):
    """Everything the server keeps about one sensor, across reconnects."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    sensor_id: int
    connected: bool = True
    sync: SyncState
    calibration: Optional[CalibrationRecord] = None
    fifo: Deque[BufferedFrame] = Field(default_factory=deque)
    stats: SessionStats = Field(default_factory=SessionStats)
    placements: Dict[int, WandDetection] = Field(default_factory=dict)
    calibration_samples: int = 0
    calibration_spread: float = 0.0
    calibrating_placement: Optional[int] = None
    next_sync_at: float = 0.0

    @property
    def ready(self) -> bool:
        """Frames from this session can be placed on the server clock and frame."""
        return self.calibration is not None and self.sync.initialized


class SessionRegistry:
    """One session per sensor id; ids are reused only by the same sensor."""

    def __init__(self, sync_history: int = 5) -> None:
        self.sync_history = sync_history
        self._sessions: Dict[int, ServerSession] = {}

    def __iter__(self) -> Iterator[ServerSession]:
        return iter(self._sessions.values())

    def __len__(self) -> int:
        return len(self._sessions)

    def __contains__(self, sensor_id: object) -> bool:
        return sensor_id in self._sessions

    def get(self, sensor_id: int) -> ServerSession:
        return self._sessions[sensor_id]

    def connected(self) -> List[ServerSession]:
        return [s for s in self._sessions.values() if s.connected]

    def _lowest_free_id(self) -> int:
        sensor_id = 1
        while sensor_id in self._sessions:
            sensor_id += 1
        if sensor_id > MAX_SENSOR_ID:
            raise RuntimeError("sensor id space exhausted")
        return sensor_id

    def attach(self, requested_id: int = 0) -> ServerSession:
        """Attach a connecting sensor.

        A known, disconnected id is re-attached with its pose and sync history.
        An unknown non-zero id is honored; anything else gets the lowest free id.
        """
        if requested_id and requested_id in self._sessions:
            session = self._sessions[requested_id]
            if not session.connected:
                session.connected = True
                session.stats.reconnects += 1
                logger.info(f"Sensor {requested_id} re-attached")
                return session
        elif requested_id:
            return self._create(requested_id)
        return self._create(self._lowest_free_id())

    def _create(self, sensor_id: int) -> ServerSession:
        session = ServerSession(
            sensor_id=sensor_id,
            sync=SyncState(sensor_id=sensor_id, window=self.sync_history),
        )
        self._sessions[sensor_id] = session
        logger.info(f"Sensor {sensor_id} connected")
        return session

    def detach(self, sensor_id: int) -> None:
        session = self._sessions.get(sensor_id)
        if session is not None and session.connected:
            session.connected = False
            logger.info(f"Sensor {sensor_id} disconnected")
