"""Fusion server.

FusionServer is the protocol core: it consumes decoded messages with the
current server time and returns the messages to send, and fuses one tick of
buffered frames on demand. serve() wraps it in asyncio streams with one reader
task per connection and a tick timer; the simulator drives the same core
without sockets.
"""

import asyncio
import time
from typing import Callable, Dict, List, Optional, Tuple

from dagster import get_dagster_logger
from pydantic import BaseModel, ConfigDict, Field

from mctl.processors.calibration import register_pose, summarize_samples
from mctl.processors.occlusion import selected_positions
from mctl.processors.timesync import (
    BufferedFrame,
    WindowStats,
    compute_offset_delay,
    drain_buffers,
    frame_window_filter,
    server_send_time,
    update_sync_state,
)
from mctl.processors.trilateration import JointFusionProcessor, SensorObservation
from mctl.protocol import codec
from mctl.protocol.codec import ControlMode, Message, MessageDecoder, MessageKind
from mctl.protocol.session import ServerSession, SessionRegistry
from mctl.utils.config import ServerConfig
from mctl.utils.errors import CalibrationError, ProtocolError
from mctl.utils.geometry import sensor_position, transform_to_server
from mctl.utils.metrics import TimingBins, track_metrics
from mctl.utils.models import (
    CalibrationRecord,
    FusedJoint,
    MetricsData,
    ObservationFrame,
    Point3,
    SyncExchange,
    get_skeleton,
)


logger = get_dagster_logger()

Outgoing = List[Tuple[int, Message]]


class SyncRow(BaseModel):
    sensor_id: int
    exchange_idx: int
    d_ms: float
    e_ms: float
    e_smoothed_ms: float


class TickResult(BaseModel):
    """Outcome of one server tick."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    tick: int
    server_time_ms: float
    fused: Dict[str, FusedJoint] = Field(default_factory=dict)
    sensors: List[int] = Field(default_factory=list)
    earliest_send_ms: Optional[float] = None
    metrics: MetricsData = Field(default_factory=MetricsData)

    @property
    def processing_ms(self) -> float:
        return self.metrics.execution_time_ms

    @property
    def latency_ms(self) -> Optional[float]:
        """Time from the earliest admitted send to the end of fusion."""
        if self.earliest_send_ms is None:
            return None
        return self.server_time_ms - self.earliest_send_ms + self.processing_ms


class FusionServer:
    """Sans-IO server core."""

    def __init__(
        self,
        config: Optional[ServerConfig] = None,
        records: Optional[Dict[int, CalibrationRecord]] = None,
    ) -> None:
        self.config = config or ServerConfig()
        self.skeleton = get_skeleton(self.config.skeleton)
        self.registry = SessionRegistry(sync_history=self.config.sync_history)
        self.records: Dict[int, CalibrationRecord] = dict(records or {})
        self.fusion = JointFusionProcessor(self.config.solver_config(), self.config.solver)
        self.window = WindowStats()
        self.latency = TimingBins()
        self.processing = TimingBins()
        self.sync_rows: List[SyncRow] = []
        self.results: List[TickResult] = []
        self.tick_index = 0
        self.empty_ticks = 0
        self.dropped_connections = 0

    def connect(self, requested_id: int, now: float) -> Outgoing:
        """Attach a sensor after its Hello and start calibration or tracking."""
        session = self.registry.attach(requested_id)
        sid = session.sensor_id
        if session.calibration is None and sid in self.records:
            session.calibration = self.records[sid]
        session.next_sync_at = now
        out: Outgoing = [(sid, codec.hello_ack(sid, self.config.fps))]
        out.extend(self._next_step(session))
        return out

    def disconnect(self, sensor_id: int) -> None:
        self.registry.detach(sensor_id)

    def _next_step(self, session: ServerSession) -> Outgoing:
        sid = session.sensor_id
        if session.calibration is not None:
            session.calibrating_placement = None
            return [(sid, codec.control(sid, ControlMode.TRACK))]
        placement = 0 if 0 not in session.placements else 1
        session.calibrating_placement = placement
        return [(sid, codec.control(sid, ControlMode.CALIBRATE, placement))]

    def handle_message(self, sensor_id: int, message: Message, now: float) -> Outgoing:
        """Consume one message from a connected sensor.

        Args:
            sensor_id: Sensor the connection is attached to
            message: Decoded message
            now: Server clock, ms

        Returns:
            Messages to send, addressed by sensor id
        """
        if sensor_id not in self.registry:
            raise ProtocolError(f"message from unattached sensor {sensor_id}")
        session = self.registry.get(sensor_id)

        if message.kind is MessageKind.SYNC_PONG:
            self._on_sync_pong(session, message, now)
            return []
        if message.kind is MessageKind.JOINT_FRAME:
            self._on_joint_frame(session, message, now)
            return []
        if message.kind is MessageKind.CALIB_FRAME:
            return self._on_calib_frame(session, message)
        raise ProtocolError(f"unexpected {message.kind.name} from sensor {sensor_id}")

    def _on_sync_pong(self, session: ServerSession, message: Message, now: float) -> None:
        t1, t2, t3 = codec.parse_sync_pong(message.payload)
        try:
            exchange = SyncExchange(t1=t1, t2=t2, t3=t3, t4=int(now))
        except ValueError as e:
            session.stats.sync_rejected += 1
            logger.warning(f"Sensor {session.sensor_id}: malformed sync exchange: {str(e)}")
            return
        before = session.sync
        session.sync = update_sync_state(session.sync, exchange)
        if session.sync is before:
            session.stats.sync_rejected += 1
            return
        d, e = compute_offset_delay(exchange)
        self.sync_rows.append(
            SyncRow(
                sensor_id=session.sensor_id,
                exchange_idx=session.stats.sync_exchanges,
                d_ms=d,
                e_ms=e,
                e_smoothed_ms=session.sync.clock_error_e,
            )
        )
        session.stats.sync_exchanges += 1

    def _on_joint_frame(self, session: ServerSession, message: Message, now: float) -> None:
        frame = codec.parse_joint_frame(message.payload, self.skeleton, session.sensor_id)
        session.stats.received += 1
        self.window.buffered += 1
        if not session.ready:
            session.stats.stale += 1
            self.window.stale += 1
            logger.debug(f"Sensor {session.sensor_id}: frame before calibration and sync")
            return
        session.fifo.append(
            BufferedFrame(
                sensor_id=session.sensor_id,
                send_time=server_send_time(now, session.sync),
                received_at=now,
                frame=frame,
            )
        )

    def _on_calib_frame(self, session: ServerSession, message: Message) -> Outgoing:
        placement, detections = codec.parse_calib_frame(message.payload)
        sid = session.sensor_id
        if placement != session.calibrating_placement:
            logger.warning(f"Sensor {sid}: unexpected calibration placement {placement}")
            return []
        usable = [d for d in detections if not d.partial]
        try:
            summary = summarize_samples(usable, self.config.max_dev_cm)
        except CalibrationError as e:
            logger.warning(f"Sensor {sid}: calibration placement {placement} rejected: {str(e)}")
            return [(sid, codec.control(sid, ControlMode.CALIBRATE, placement))]

        session.placements[placement] = summary.detection
        session.calibration_samples += summary.kept
        session.calibration_spread = max(session.calibration_spread, summary.spread_cm)
        if placement == 0:
            return self._next_step(session)

        try:
            pose = register_pose(session.placements[0], summary.detection)
        except CalibrationError as e:
            logger.warning(f"Sensor {sid}: registration failed: {str(e)}")
            session.placements.clear()
            session.calibration_samples = 0
            session.calibration_spread = 0.0
            return self._next_step(session)

        session.calibration = CalibrationRecord(
            sensor_id=sid,
            pose=pose,
            sample_count=session.calibration_samples,
            residual_spread=session.calibration_spread,
        )
        self.records[sid] = session.calibration
        logger.info(f"Sensor {sid} calibrated: theta={pose.yaw_theta:.4f} rad")
        return self._next_step(session)

    def sync_beacons(self, now: float) -> Outgoing:
        """SyncPing for every connected session whose beacon is due."""
        out: Outgoing = []
        for session in self.registry.connected():
            if now >= session.next_sync_at:
                out.append((session.sensor_id, codec.sync_ping(session.sensor_id, int(now))))
                session.next_sync_at = now + self.config.sync_period_ms
        return out

    def ready_sessions(self) -> List[ServerSession]:
        return [s for s in self.registry if s.ready]

    @track_metrics
    def _fuse(self, result: TickResult, admitted: Dict[int, BufferedFrame]) -> TickResult:
        frames: Dict[int, Dict[str, Point3]] = {}
        reports = {}
        sensors: Dict[int, Point3] = {}
        for sid, buffered in admitted.items():
            pose = self.registry.get(sid).calibration.pose
            frame: ObservationFrame = buffered.frame
            frames[sid] = {
                obs.joint: transform_to_server(obs.position, pose) for obs in frame.observations
            }
            if frame.report is not None:
                reports[sid] = frame.report
            sensors[sid] = sensor_position(pose)

        selection = selected_positions(
            reports, frames, self.skeleton.joints, self.config.occlusion_compensation
        )
        data: Dict[str, List[SensorObservation]] = {
            joint: [(sensors[sid], frames[sid][joint]) for sid in sids]
            for joint, sids in selection.items()
        }
        fused = self.fusion.process(data)
        result.fused = fused.joints
        return result

    def server_tick(self, now: float) -> TickResult:
        """Admit buffered frames into the window and fuse them."""
        tick = self.tick_index
        self.tick_index += 1
        admitted = self._admit(now)
        result = TickResult(tick=tick, server_time_ms=now, sensors=sorted(admitted))
        if not admitted:
            self.empty_ticks += 1
            self.results.append(result)
            return result

        result.earliest_send_ms = min(b.send_time for b in admitted.values())
        result = self._fuse(result, admitted)
        self.processing.add(result.processing_ms)
        latency = result.latency_ms
        if latency is not None:
            self.latency.add(latency)
        self.results.append(result)
        logger.debug(
            f"Tick {tick}: fused {len(result.fused)} joints from {len(admitted)} sensors "
            f"in {result.processing_ms:.2f} ms"
        )
        return result

    def _admit(self, now: float) -> Dict[int, BufferedFrame]:
        admitted: Dict[int, BufferedFrame] = {}
        for session in self.ready_sessions():
            local = WindowStats()
            admitted.update(
                frame_window_filter(
                    {session.sensor_id: session.fifo}, now, self.config.frame_window_ms, local
                )
            )
            session.stats.admitted += local.admitted
            session.stats.stale += local.stale
            session.stats.superfluous += local.superfluous
            self.window.admitted += local.admitted
            self.window.stale += local.stale
            self.window.superfluous += local.superfluous
            if local.stale:
                logger.warning(f"Sensor {session.sensor_id}: {local.stale} stale frames dropped")
        return admitted

    def stop_all(self) -> Outgoing:
        """Control(Stop) for every connected sensor."""
        return [
            (s.sensor_id, codec.control(s.sensor_id, ControlMode.STOP))
            for s in self.registry.connected()
        ]

    def shutdown(self) -> int:
        """Drain every FIFO; leftovers count as stale."""
        buffers = {s.sensor_id: s.fifo for s in self.registry}
        drained = drain_buffers(buffers, self.window)
        if drained:
            logger.info(f"Drained {drained} buffered frames at shutdown")
        return drained

    def fused_rows(self) -> List[Dict]:
        rows = []
        for result in self.results:
            for joint in self.skeleton.joints:
                fused = result.fused.get(joint)
                if fused is None:
                    continue
                rows.append(
                    {
                        "tick": result.tick,
                        "server_time_ms": round(result.server_time_ms, 3),
                        "joint_id": joint,
                        "x": fused.position.x,
                        "y": fused.position.y,
                        "z": fused.position.z,
                        "objective": fused.final_objective,
                        "sensor_count": fused.sensor_count,
                        "flags": fused.flags(),
                    }
                )
        return rows

    def summary_rows(self) -> List[Dict]:
        window = self.window
        values = [
            ("ticks", len(self.results)),
            ("fused_ticks", sum(1 for r in self.results if r.fused)),
            ("empty_ticks", self.empty_ticks),
            ("received", window.buffered),
            ("admitted", window.admitted),
            ("stale", window.stale),
            ("superfluous", window.superfluous),
            ("dropped_connections", self.dropped_connections),
            ("latency_within_window", self.latency.fraction_below(self.config.frame_window_ms)),
        ]
        return [{"metric": name, "value": value} for name, value in values]

    def timing_rows(self) -> List[Dict]:
        rows: List[Dict] = []
        for metric, bins in (("latency", self.latency), ("processing", self.processing)):
            rows.extend({"metric": metric, **row} for row in bins.rows())
        return rows


def server_clock() -> float:
    return time.monotonic() * 1000.0


class ServerShell:
    """asyncio transport around a FusionServer."""

    def __init__(
        self,
        core: FusionServer,
        clock: Callable[[], float] = server_clock,
    ) -> None:
        self.core = core
        self.clock = clock
        self.writers: Dict[int, asyncio.StreamWriter] = {}
        self.lock = asyncio.Lock()
        self.stopping = asyncio.Event()

    async def _send(self, outgoing: Outgoing) -> None:
        for sensor_id, message in outgoing:
            writer = self.writers.get(sensor_id)
            if writer is None or writer.is_closing():
                continue
            writer.write(codec.encode_message(message))
        for writer in list(self.writers.values()):
            if not writer.is_closing():
                try:
                    await writer.drain()
                except ConnectionError:
                    pass

    async def handle_connection(
        self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter
    ) -> None:
        decoder = MessageDecoder()
        sensor_id: Optional[int] = None
        try:
            while not self.stopping.is_set():
                chunk = await reader.read(65536)
                if not chunk:
                    break
                for message in decoder.feed(chunk):
                    now = self.clock()
                    async with self.lock:
                        if sensor_id is None:
                            if message.kind is not MessageKind.HELLO:
                                raise ProtocolError("first message must be Hello")
                            outgoing = self.core.connect(message.sensor_id, now)
                            sensor_id = outgoing[0][0]
                            self.writers[sensor_id] = writer
                        else:
                            outgoing = self.core.handle_message(sensor_id, message, now)
                    await self._send(outgoing)
        except (ProtocolError, ValueError) as e:
            self.core.dropped_connections += 1
            logger.warning(f"Dropping connection of sensor {sensor_id}: {str(e)}")
        except ConnectionError as e:
            logger.info(f"Connection of sensor {sensor_id} lost: {str(e)}")
        finally:
            if sensor_id is not None:
                async with self.lock:
                    self.core.disconnect(sensor_id)
                    if self.writers.get(sensor_id) is writer:
                        del self.writers[sensor_id]
            writer.close()

    async def tick_loop(self) -> None:
        period = 1.0 / self.core.config.fps
        next_tick = time.monotonic()
        while not self.stopping.is_set():
            next_tick += period
            async with self.lock:
                now = self.clock()
                outgoing = self.core.sync_beacons(now)
                self.core.server_tick(now)
            await self._send(outgoing)
            delay = next_tick - time.monotonic()
            if delay > 0:
                try:
                    await asyncio.wait_for(self.stopping.wait(), timeout=delay)
                except asyncio.TimeoutError:
                    pass

    async def serve(self, duration_s: Optional[float] = None) -> FusionServer:
        """Listen, tick and stop after duration_s seconds or on cancellation."""
        config = self.core.config
        server = await asyncio.start_server(
            self.handle_connection, config.listen_host, config.listen_port
        )
        logger.info(f"Listening on {config.listen_host}:{config.listen_port} at {config.fps} fps")
        ticker = asyncio.create_task(self.tick_loop())
        try:
            if duration_s is None:
                await self.stopping.wait()
            else:
                try:
                    await asyncio.wait_for(self.stopping.wait(), timeout=duration_s)
                except asyncio.TimeoutError:
                    pass
        finally:
            self.stopping.set()
            await ticker
            async with self.lock:
                outgoing = self.core.stop_all()
            await self._send(outgoing)
            server.close()
            for writer in list(self.writers.values()):
                writer.close()
            await server.wait_closed()
            async with self.lock:
                self.core.shutdown()
        return self.core


async def serve(
    config: ServerConfig,
    records: Optional[Dict[int, CalibrationRecord]] = None,
    duration_s: Optional[float] = None,
) -> FusionServer:
    return await ServerShell(FusionServer(config, records)).serve(duration_s)
