"""Client clock synchronization and frame window admission.

The server timestamps a sync ping (t1) and its echo (t4); the client stamps
receipt (t2) and reply (t3) on its own clock. Delay and clock error follow
from the four stamps, are smoothed with a running median, and let the server
place every received frame on its own clock before the frame window decides
whether it is fused, stale or superfluous.
"""

from collections import deque
from statistics import median
from typing import Any, Deque, Dict, Iterable, List, MutableMapping, Optional, Tuple

from dagster import get_dagster_logger
from pydantic import BaseModel, ConfigDict

from mctl.utils.errors import CorruptExchangeError, SyncNotInitializedError
from mctl.utils.models import SyncExchange, SyncState


logger = get_dagster_logger()


def compute_offset_delay(exchange: SyncExchange) -> Tuple[float, float]:
    """One-way delay and clock error (server minus client) of one exchange."""
    d = ((exchange.t4 - exchange.t1) - (exchange.t3 - exchange.t2)) / 2.0
    e = ((exchange.t1 - exchange.t2) + (exchange.t4 - exchange.t3)) / 2.0
    if d < 0:
        raise CorruptExchangeError(f"negative delay {d} ms from {exchange}")
    return d, e


def update_sync_state(state: SyncState, exchange: SyncExchange) -> SyncState:
    """Push an exchange and re-smooth; corrupt exchanges leave the state unchanged."""
    try:
        compute_offset_delay(exchange)
    except CorruptExchangeError as e:
        logger.warning(f"Sensor {state.sensor_id}: discarding sync exchange: {str(e)}")
        return state

    history = (list(state.history) + [exchange])[-state.window :]
    values = [compute_offset_delay(x) for x in history]
    return SyncState(
        sensor_id=state.sensor_id,
        delay_d=median(d for d, _ in values),
        clock_error_e=median(e for _, e in values),
        history=history,
        window=state.window,
    )


def _require(state: SyncState) -> Tuple[float, float]:
    if state.delay_d is None or state.clock_error_e is None:
        raise SyncNotInitializedError(f"sensor {state.sensor_id} has no sync estimate yet")
    return state.delay_d, state.clock_error_e


def backtrack_send_time(t_receive: float, state: SyncState) -> float:
    """Send instant of a message on the client clock."""
    d, e = _require(state)
    return t_receive - d - e


def to_server_clock(t_client: float, state: SyncState) -> float:
    _, e = _require(state)
    return t_client + e


def server_send_time(t_receive: float, state: SyncState) -> float:
    """Send instant of a message on the server clock."""
    return to_server_clock(backtrack_send_time(t_receive, state), state)


class BufferedFrame(BaseModel):
    """A received frame waiting in its sensor's FIFO."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    sensor_id: int
    send_time: float
    received_at: float
    frame: Any = None


class WindowStats(BaseModel):
    """Frame accounting; every buffered frame ends in exactly one bucket."""

    buffered: int = 0
    admitted: int = 0
    stale: int = 0
    superfluous: int = 0

    @property
    def settled(self) -> int:
        return self.admitted + self.stale + self.superfluous

    def reconciles(self, pending: int = 0) -> bool:
        return self.buffered == self.settled + pending


FrameBuffers = MutableMapping[int, Deque[BufferedFrame]]


def window_length_ms(fps: float) -> float:
    return 1000.0 / fps


def frame_window_filter(
    buffers: FrameBuffers,
    server_now: float,
    window_ms: float,
    stats: Optional[WindowStats] = None,
) -> Dict[int, BufferedFrame]:
    """Pop every frame sent by server_now and admit the newest in-window one per sensor.

    Args:
        buffers: Per-sensor FIFOs ordered by arrival
        server_now: Current server time, ms
        window_ms: Window length, normally 1000/fps
        stats: Accounting updated in place

    Returns:
        Admitted frame per sensor id
    """
    stats = stats if stats is not None else WindowStats()
    admitted: Dict[int, BufferedFrame] = {}
    lower = server_now - window_ms
    for sensor_id, fifo in buffers.items():
        in_window: List[BufferedFrame] = []
        while fifo and fifo[0].send_time <= server_now:
            frame = fifo.popleft()
            if frame.send_time <= lower:
                stats.stale += 1
            else:
                in_window.append(frame)
        if not in_window:
            continue
        newest = max(in_window, key=lambda f: f.send_time)
        stats.superfluous += len(in_window) - 1
        stats.admitted += 1
        admitted[sensor_id] = newest
    return admitted


def drain_buffers(buffers: FrameBuffers, stats: WindowStats) -> int:
    """Discard everything still buffered as stale."""
    drained = 0
    for fifo in buffers.values():
        drained += len(fifo)
        fifo.clear()
    stats.stale += drained
    return drained


def new_buffers(sensor_ids: Iterable[int] = ()) -> Dict[int, Deque[BufferedFrame]]:
    return {sensor_id: deque() for sensor_id in sensor_ids}
