"""Discrete-event simulation of a full capture session.

The real FusionServer and SensorClient cores exchange codec-encoded bytes
over simulated links. A run has a setup phase, in which every sensor
connects, calibrates with the wand (or gets its true pose) and completes a
few sync exchanges, and a tracking phase of one server tick per scenario
tick. Client k captures the pose of tick k shortly before the server fuses
tick k.
"""

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from dagster import get_dagster_logger

from mctl.ingestors.simulated_ingestor import SimulatedSensorIngestor
from mctl.processors.calibration import WandConfig
from mctl.protocol import codec
from mctl.protocol.client import ClientMode, SensorClient
from mctl.protocol.codec import Message, MessageDecoder
from mctl.protocol.server import FusionServer, Outgoing
from mctl.sim.network import Direction, LinkModel
from mctl.sim.scenario import ScenarioConfig, pose_error, true_records
from mctl.sim.skeleton import GroundTruth, generate_ground_truth
from mctl.utils.config import ServerConfig, validate_server_config
from mctl.utils.errors import SimulationError
from mctl.utils.metrics import TimingBins
from mctl.utils.models import JOINT_GROUPS, CalibrationRecord, get_skeleton


logger = get_dagster_logger()

NETWORK_STREAM = 7


@dataclass
class Connection:
    """Simulated TCP connection of one sensor; epoch changes on every reconnect."""

    link: LinkModel
    epoch: int = 0
    up: MessageDecoder = field(default_factory=MessageDecoder)
    down: MessageDecoder = field(default_factory=MessageDecoder)
    open: bool = False

    def reopen(self) -> None:
        self.epoch += 1
        self.up = MessageDecoder()
        self.down = MessageDecoder()
        self.link.reset()
        self.open = True


@dataclass
class SimulationResult:
    """Everything a run produced."""

    scenario: ScenarioConfig
    truth: GroundTruth
    server: FusionServer
    setup_ms: float
    tracking_start_ms: float
    disconnects: int = 0
    records: Dict[int, CalibrationRecord] = field(default_factory=dict)

    def fused_rows(self) -> List[Dict]:
        return self.server.fused_rows()

    def truth_rows(self) -> List[Dict]:
        return self.truth.rows()

    def joint_errors(self) -> Dict[str, List[float]]:
        """Fused-to-truth distance per joint over every fused tick."""
        errors: Dict[str, List[float]] = {joint: [] for joint in self.truth.joints}
        for result in self.server.results:
            if result.tick >= self.truth.ticks:
                continue
            for joint, fused in result.fused.items():
                truth = self.truth.positions[result.tick, self.truth.joints.index(joint)]
                errors[joint].append(float(np.linalg.norm(fused.position.to_array() - truth)))
        return errors

    def error_summary_rows(self) -> List[Dict]:
        errors = self.joint_errors()
        rows = [_error_row("joint", joint, values) for joint, values in errors.items()]
        for group, joints in JOINT_GROUPS.items():
            values = [e for joint in joints if joint in errors for e in errors[joint]]
            if values:
                rows.append(_error_row("group", group, values))
        scripted = sorted({j for script in self.scenario.occlusions for j in script.joints})
        if scripted:
            rows.append(
                _error_row("scripted_occluded", "all", [e for j in scripted for e in errors[j]])
            )
        rows.append(_error_row("overall", "all", [e for v in errors.values() for e in v]))
        return rows

    def mae(self, joint: Optional[str] = None) -> float:
        errors = self.joint_errors()
        values = errors[joint] if joint else [e for v in errors.values() for e in v]
        return float(np.mean(values)) if values else float("nan")

    def timing_rows(self) -> List[Dict]:
        rows = self.server.timing_rows()
        rows.extend({"metric": "clock_error", **row} for row in self.clock_error_bins().rows())
        return rows

    def clock_error_bins(self) -> TimingBins:
        """Smoothed-estimate error per accepted exchange against the true offsets."""
        bins = TimingBins()
        for row in self.server.sync_rows:
            bins.add(row.e_smoothed_ms + self.truth.clock_offsets[row.sensor_id])
        return bins

    def sync_rows(self) -> List[Dict]:
        return [row.model_dump() for row in self.server.sync_rows]

    def calibration_rows(self) -> List[Dict]:
        rows = []
        for sid, record in sorted(self.records.items()):
            error = pose_error(record.pose, self.truth.poses[sid])
            rows.append(
                {
                    "sensor_id": sid,
                    **error,
                    "sample_count": record.sample_count,
                    "residual_spread": record.residual_spread,
                }
            )
        return rows

    def summary_rows(self) -> List[Dict]:
        rows = self.server.summary_rows()
        rows.extend(
            {"metric": name, "value": value}
            for name, value in (
                ("disconnects", self.disconnects),
                ("setup_ms", self.setup_ms),
                ("mae_cm", self.mae()),
            )
        )
        return rows


def _error_row(scope: str, name: str, values: List[float]) -> Dict:
    array = np.array(values, dtype=float)
    return {
        "scope": scope,
        "name": name,
        "mae_cm": float(array.mean()) if array.size else float("nan"),
        "std_cm": float(array.std()) if array.size else float("nan"),
        "samples": int(array.size),
    }


def server_config_for(
    scenario: ScenarioConfig, base: Optional[ServerConfig] = None
) -> ServerConfig:
    """Server configuration with the scenario's rate, skeleton and fusion options."""
    values = (base or ServerConfig()).model_dump()
    values.update(
        fps=scenario.fps,
        skeleton=scenario.skeleton,
        sync_period_ms=scenario.sync_period_ms,
        occlusion_compensation=scenario.occlusion_compensation,
        solver=scenario.solver,
        wand_radius_cm=scenario.wand_radius_cm,
        calibration_samples=scenario.calibration_samples,
    )
    return validate_server_config(ServerConfig(**values))


class Simulation:
    """Event loop over server time in milliseconds."""

    def __init__(
        self,
        scenario: ScenarioConfig,
        config: Optional[ServerConfig] = None,
        records: Optional[Dict[int, CalibrationRecord]] = None,
    ) -> None:
        self.scenario = scenario
        self.truth = generate_ground_truth(scenario)
        self.config = server_config_for(scenario, config)
        if records is None and scenario.calibration == "ground_truth":
            records = true_records(scenario)
        self.server = FusionServer(self.config, records)
        skeleton = get_skeleton(scenario.skeleton)
        wand = WandConfig(
            c_offset=self.config.c_offset,
            wand_radius_cm=scenario.wand_radius_cm,
            max_dev_cm=self.config.max_dev_cm,
            samples_per_placement=scenario.calibration_samples,
        )
        self.clients: Dict[int, SensorClient] = {}
        self.connections: Dict[int, Connection] = {}
        for spec in scenario.sensors:
            ingestor = SimulatedSensorIngestor(scenario, spec.sensor_id, self.truth)
            self.clients[spec.sensor_id] = SensorClient(ingestor, skeleton, wand)
            rng = np.random.default_rng([scenario.seed, spec.sensor_id, NETWORK_STREAM])
            self.connections[spec.sensor_id] = Connection(LinkModel(scenario.delay, rng))
        self.queue: List[Tuple[float, int, str, Tuple]] = []
        self.counter = itertools.count()
        self.now = 0.0
        self.disconnects = 0

    def client_now(self, sensor_id: int) -> int:
        return int(self.now + self.scenario.sensor(sensor_id).clock_offset_ms)

    def schedule(self, at: float, kind: str, *args: Any) -> None:
        heapq.heappush(self.queue, (at, next(self.counter), kind, args))

    def send_up(self, sensor_id: int, message: Message) -> None:
        connection = self.connections[sensor_id]
        if not connection.open:
            return
        arrival = connection.link.deliver(self.now, Direction.UP)
        self.schedule(
            arrival, "to_server", sensor_id, connection.epoch, codec.encode_message(message)
        )

    def send_down(self, outgoing: Outgoing) -> None:
        for sensor_id, message in outgoing:
            connection = self.connections.get(sensor_id)
            if connection is None or not connection.open:
                continue
            arrival = connection.link.deliver(self.now, Direction.DOWN)
            self.schedule(
                arrival, "to_client", sensor_id, connection.epoch, codec.encode_message(message)
            )

    def connect(self, sensor_id: int) -> None:
        self.connections[sensor_id].reopen()
        self.send_up(sensor_id, self.clients[sensor_id].hello())

    def drop(self, sensor_id: int) -> None:
        connection = self.connections[sensor_id]
        connection.open = False
        self.disconnects += 1
        self.server.disconnect(sensor_id)
        self.clients[sensor_id].mode = ClientMode.CONNECTING
        logger.warning(f"Sensor {sensor_id}: simulated disconnect at {self.now:.1f} ms")
        self.schedule(self.now + self.scenario.delay.reconnect_ms, "reconnect", sensor_id)

    def _to_server(self, sensor_id: int, epoch: int, data: bytes) -> None:
        connection = self.connections[sensor_id]
        if epoch != connection.epoch or not connection.open:
            return
        for message in connection.up.feed(data):
            if message.kind is codec.MessageKind.HELLO:
                self.send_down(self.server.connect(message.sensor_id, self.now))
            else:
                self.send_down(self.server.handle_message(sensor_id, message, self.now))

    def _to_client(self, sensor_id: int, epoch: int, data: bytes) -> None:
        connection = self.connections[sensor_id]
        if epoch != connection.epoch or not connection.open:
            return
        client = self.clients[sensor_id]
        for message in connection.down.feed(data):
            for reply in client.handle_message(message, self.client_now(sensor_id)):
                self.send_up(sensor_id, reply)

    def step(self) -> None:
        at, _, kind, args = heapq.heappop(self.queue)
        self.now = at
        if kind == "to_server":
            self._to_server(*args)
        elif kind == "to_client":
            self._to_client(*args)
        elif kind == "reconnect":
            self.connect(*args)
        elif kind == "beacon":
            self.send_down(self.server.sync_beacons(self.now))
        elif kind == "capture":
            self._capture(*args)
        elif kind == "server_tick":
            self.send_down(self.server.sync_beacons(self.now))
            self.server.server_tick(self.now)

    def _capture(self, sensor_id: int, tick: int) -> None:
        connection = self.connections[sensor_id]
        if not connection.open:
            return
        if connection.link.maybe_disconnect(self.now):
            self.drop(sensor_id)
            return
        message = self.clients[sensor_id].tick(tick, self.client_now(sensor_id))
        if message is not None:
            self.send_up(sensor_id, message)

    def _setup_done(self) -> bool:
        sessions = [s for s in self.server.registry if s.sensor_id in self.clients]
        return len(sessions) == len(self.clients) and all(
            s.ready
            and s.stats.sync_exchanges >= self.scenario.sync_warmup
            and self.clients[s.sensor_id].mode is ClientMode.TRACKING
            for s in sessions
        )

    def run_setup(self) -> float:
        """Connect, calibrate and warm up sync; returns the elapsed server time."""
        for sensor_id in self.clients:
            self.connect(sensor_id)
        period = self.scenario.period_ms
        next_beacon = 0.0
        while not self._setup_done():
            if self.now > self.scenario.setup_timeout_ms:
                raise SimulationError(
                    f"setup did not finish within {self.scenario.setup_timeout_ms:.0f} ms"
                )
            if not self.queue or self.queue[0][0] > next_beacon:
                self.schedule(next_beacon, "beacon")
                next_beacon += period
            self.step()
        return self.now

    def run_tracking(self, start: float) -> None:
        period = self.scenario.period_ms
        lead = self.scenario.capture_lead_ms
        for tick in range(self.scenario.ticks):
            at = start + tick * period
            for sensor_id in self.clients:
                self.schedule(at - lead, "capture", sensor_id, tick)
            self.schedule(at, "server_tick")
        end = start + self.scenario.ticks * period
        while self.queue and self.queue[0][0] <= end:
            self.step()
        self.now = end
        self.send_down(self.server.stop_all())
        while self.queue:
            self.step()
        self.server.shutdown()

    def run(self) -> SimulationResult:
        setup_ms = self.run_setup()
        period = self.scenario.period_ms
        lead = self.scenario.capture_lead_ms
        # First tick lands on the beacon grid, far enough out for its captures.
        start = (int((setup_ms + lead) // period) + 1) * period
        logger.info(
            f"Scenario {self.scenario.name!r}: setup finished at {setup_ms:.1f} ms, "
            f"tracking {self.scenario.ticks} ticks from {start:.1f} ms"
        )
        self.run_tracking(start)
        result = SimulationResult(
            scenario=self.scenario,
            truth=self.truth,
            server=self.server,
            setup_ms=setup_ms,
            tracking_start_ms=start,
            disconnects=self.disconnects,
            records=dict(self.server.records),
        )
        logger.info(f"Scenario {self.scenario.name!r}: MAE {result.mae():.3f} cm")
        return result


def run_scenario(
    scenario: ScenarioConfig,
    config: Optional[ServerConfig] = None,
    records: Optional[Dict[int, CalibrationRecord]] = None,
) -> SimulationResult:
    return Simulation(scenario, config, records).run()


def calibrate_scenario(scenario: ScenarioConfig) -> Dict[int, CalibrationRecord]:
    """Wand-calibrate every scenario sensor without tracking."""
    simulation = Simulation(scenario.model_copy(update={"calibration": "wand"}))
    simulation.run_setup()
    return dict(simulation.server.records)
