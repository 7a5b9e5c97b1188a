"""Sensor client.

SensorClient is the protocol core of one sensor: it answers sync pings at
once, captures and localizes the wand when asked to calibrate, and turns every
observation tick into a JointFrame carrying its occlusion report.
client_loop() runs it over an asyncio connection and reconnects with
exponential backoff.
"""

import asyncio
import time
from enum import Enum
from typing import Callable, List, Optional

from dagster import get_dagster_logger

from mctl.ingestors.base_ingestor import BaseIngestor
from mctl.processors.calibration import WandCalibrationProcessor, WandConfig
from mctl.processors.occlusion import OcclusionProcessor
from mctl.protocol import codec
from mctl.protocol.codec import ControlMode, Message, MessageDecoder, MessageKind
from mctl.utils.errors import CalibrationError, ProtocolError
from mctl.utils.models import ObservationFrame, Skeleton, WandDetection


logger = get_dagster_logger()

BACKOFF_INITIAL_S = 0.1
BACKOFF_MAX_S = 5.0


class ClientMode(str, Enum):
    CONNECTING = "connecting"
    IDLE = "idle"
    CALIBRATING = "calibrating"
    TRACKING = "tracking"
    STOPPED = "stopped"


class SensorClient:
    """Sans-IO client core."""

    def __init__(
        self,
        ingestor: BaseIngestor,
        skeleton: Skeleton,
        wand_config: Optional[WandConfig] = None,
    ) -> None:
        self.ingestor = ingestor
        self.skeleton = skeleton
        self.sensor_id = ingestor.sensor_id
        self.mode = ClientMode.CONNECTING
        self.fps: Optional[float] = None
        self.wand = WandCalibrationProcessor(wand_config)
        self.occlusion = OcclusionProcessor(skeleton, self.sensor_id)
        self.frames_sent = 0

    def hello(self) -> Message:
        self.mode = ClientMode.CONNECTING
        return codec.hello(self.sensor_id)

    def handle_message(self, message: Message, now: int) -> List[Message]:
        """React to a server message; now is the sensor clock in ms."""
        if message.kind is MessageKind.SYNC_PING:
            t1 = codec.parse_sync_ping(message.payload)
            return [codec.sync_pong(self.sensor_id, t1, now, now)]
        if message.kind is MessageKind.HELLO_ACK:
            self.fps = codec.parse_hello_ack(message.payload)
            if message.sensor_id != self.sensor_id:
                logger.info(f"Server assigned sensor id {message.sensor_id}")
                self.sensor_id = message.sensor_id
                self.occlusion.sensor_id = message.sensor_id
            self.mode = ClientMode.IDLE
            return []
        if message.kind is MessageKind.CONTROL:
            mode, placement = codec.parse_control(message.payload)
            return self._on_control(mode, placement)
        raise ProtocolError(f"unexpected {message.kind.name} at sensor {self.sensor_id}")

    def _on_control(self, mode: ControlMode, placement: int) -> List[Message]:
        if mode is ControlMode.TRACK:
            self.mode = ClientMode.TRACKING
            return []
        if mode is ControlMode.STOP:
            self.mode = ClientMode.STOPPED
            return []
        self.mode = ClientMode.CALIBRATING
        detections = self.capture_wand(placement)
        return [codec.calib_frame(self.sensor_id, placement, detections)]

    def capture_wand(self, placement: int) -> List[WandDetection]:
        detections: List[WandDetection] = []
        for sample in range(self.wand.wand_config.samples_per_placement):
            frame = self.ingestor.capture_depth(placement, sample)
            try:
                detections.append(self.wand.detect(frame))
            except CalibrationError as e:
                logger.warning(f"Sensor {self.sensor_id}: wand capture {sample} failed: {str(e)}")
        return detections

    def observe(self, tick: int, now: int) -> ObservationFrame:
        frame = self.ingestor.create_frame(tick, now)
        report = self.occlusion.process(frame.observations)
        return frame.model_copy(update={"sensor_id": self.sensor_id, "report": report})

    def tick(self, tick: int, now: int) -> Optional[Message]:
        """JointFrame for an observation tick while tracking."""
        if self.mode is not ClientMode.TRACKING:
            return None
        self.frames_sent += 1
        return codec.joint_frame(self.observe(tick, now), self.skeleton)


def client_clock() -> int:
    return int(time.monotonic() * 1000.0)


async def _run_connection(
    client: SensorClient,
    host: str,
    port: int,
    clock: Callable[[], int],
    stop: asyncio.Event,
) -> None:
    reader, writer = await asyncio.open_connection(host, port)
    decoder = MessageDecoder()
    writer.write(codec.encode_message(client.hello()))
    await writer.drain()

    async def receive() -> None:
        while not stop.is_set():
            chunk = await reader.read(65536)
            if not chunk:
                raise ConnectionError("server closed the connection")
            for message in decoder.feed(chunk):
                for reply in client.handle_message(message, clock()):
                    writer.write(codec.encode_message(reply))
                await writer.drain()
                if client.mode is ClientMode.STOPPED:
                    stop.set()

    async def observe() -> None:
        tick = 0
        while not stop.is_set():
            period = 1.0 / (client.fps or 30.0)
            message = client.tick(tick, clock())
            if message is not None:
                writer.write(codec.encode_message(message))
                await writer.drain()
                tick += 1
            await asyncio.sleep(period)

    workers = [asyncio.create_task(receive()), asyncio.create_task(observe())]
    stopper = asyncio.create_task(stop.wait())
    try:
        done, _ = await asyncio.wait(workers + [stopper], return_when=asyncio.FIRST_COMPLETED)
        for task in done:
            if task is not stopper and task.exception() is not None:
                raise task.exception()  # type: ignore[misc]
    finally:
        for task in workers + [stopper]:
            task.cancel()
        writer.close()


async def client_loop(
    client: SensorClient,
    host: str,
    port: int,
    clock: Callable[[], int] = client_clock,
    stop: Optional[asyncio.Event] = None,
    max_attempts: Optional[int] = None,
) -> None:
    """Run a sensor until stopped, reconnecting with exponential backoff."""
    stop = stop or asyncio.Event()
    backoff = BACKOFF_INITIAL_S
    attempts = 0
    while not stop.is_set():
        attempts += 1
        try:
            await _run_connection(client, host, port, clock, stop)
            backoff = BACKOFF_INITIAL_S
        except (ConnectionError, OSError, ProtocolError) as e:
            if max_attempts is not None and attempts >= max_attempts:
                logger.error(f"Sensor {client.sensor_id}: giving up after {attempts} attempts")
                raise
            logger.warning(
                f"Sensor {client.sensor_id}: connection lost ({str(e)}), retrying in {backoff:.1f}s"
            )
            try:
                await asyncio.wait_for(stop.wait(), timeout=backoff)
            except asyncio.TimeoutError:
                pass
            backoff = min(backoff * 2.0, BACKOFF_MAX_S)
