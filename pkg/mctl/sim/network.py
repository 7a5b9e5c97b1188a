"""Network delay model for simulated connections.

Each connection behaves like a TCP stream: a message is delivered after a
one-way delay drawn from the DelayConfig, but never before a message sent
earlier in the same direction. Losses only happen as whole-connection
disconnects.
"""

from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from mctl.sim.scenario import DelayConfig


class Direction(str, Enum):
    UP = "up"  # client to server
    DOWN = "down"  # server to client


class Delivery(NamedTuple):
    send_ms: float
    direction: Direction
    deliver_ms: Optional[float]  # None when lost to a disconnect

    @property
    def delay_ms(self) -> Optional[float]:
        return None if self.deliver_ms is None else self.deliver_ms - self.send_ms


class LinkModel:
    """One connection's delay sampler and ordering state."""

    def __init__(self, delay: DelayConfig, rng: np.random.Generator) -> None:
        self.delay = delay
        self.rng = rng
        self.last_delivery: Dict[Direction, float] = {Direction.UP: 0.0, Direction.DOWN: 0.0}
        self.down_until: Optional[float] = None

    def base_ms(self, direction: Direction) -> float:
        half = self.delay.asymmetry_ms / 2.0
        return self.delay.base_ms + (half if direction is Direction.UP else -half)

    def sample_delay(self, direction: Direction) -> float:
        delay = self.base_ms(direction)
        if self.delay.jitter_ms > 0.0:
            delay += self.rng.uniform(-self.delay.jitter_ms, self.delay.jitter_ms)
        if self.delay.spike_probability > 0.0 and self.rng.random() < self.delay.spike_probability:
            delay += self.delay.spike_ms
        return max(delay, 0.0)

    def maybe_disconnect(self, now: float) -> bool:
        """Roll for a disconnect at now; True when the connection just dropped."""
        p = self.delay.disconnect_probability
        if p <= 0.0 or self.is_down(now):
            return False
        if self.rng.random() >= p:
            return False
        self.down_until = now + self.delay.reconnect_ms
        return True

    def is_down(self, now: float) -> bool:
        return self.down_until is not None and now < self.down_until

    def reset(self) -> None:
        """Fresh ordering state for a new connection."""
        self.last_delivery = {Direction.UP: 0.0, Direction.DOWN: 0.0}

    def deliver(self, send_ms: float, direction: Direction) -> float:
        arrival = max(send_ms + self.sample_delay(direction), self.last_delivery[direction])
        self.last_delivery[direction] = arrival
        return arrival


def simulate_network(
    delay: DelayConfig,
    timeline: Sequence[Tuple[float, Direction]],
    seed: int = 0,
) -> List[Delivery]:
    """Delivery times for a timeline of (send time, direction) on one connection.

    A disconnect rolled at a send loses that message, every message sent
    until the link is back, and every message still in flight.
    """
    link = LinkModel(delay, np.random.default_rng(seed))
    deliveries: List[Delivery] = []
    for send_ms, direction in sorted(timeline, key=lambda item: item[0]):
        if link.is_down(send_ms):
            deliveries.append(Delivery(send_ms, direction, None))
            continue
        if link.maybe_disconnect(send_ms):
            deliveries = [
                d if d.deliver_ms is None or d.deliver_ms <= send_ms
                else d._replace(deliver_ms=None)
                for d in deliveries
            ]
            deliveries.append(Delivery(send_ms, direction, None))
            link.reset()
            continue
        deliveries.append(Delivery(send_ms, direction, link.deliver(send_ms, direction)))
    return deliveries
