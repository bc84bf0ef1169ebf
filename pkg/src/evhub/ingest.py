"""Sensor ingestion: decode readings, detect condition edges, hand firings off.

Firing is edge-triggered: a channel fires when its condition transitions
from unsatisfied (or never evaluated) to satisfied, and re-arms when the
condition clears. A channel configured with retrigger_interval also
re-fires while the condition holds continuously longer than the interval.

Firings cross to the notifier over a bounded queue that never blocks the
producer; on overflow the oldest firing is dropped (freshness beats
completeness for alarms) and a counter incremented.
"""

from __future__ import annotations

import asyncio
import logging
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .model import Reading, evaluate
from .registry import Registry, UnknownChannel
from .transports import FrameTooLong, LineStream
from .wire import MAX_FRAME_BYTES, DecodeError, decode_reading

log = logging.getLogger(__name__)

DEFAULT_QUEUE_CAPACITY = 1024
DEFAULT_READ_TIMEOUT = 300.0


@dataclass
class Metrics:
    """Operational counters, exposed through the Update command."""

    readings_total: int = 0
    dropped_unknown_channel: int = 0
    queue_overflow: int = 0
    active_connections: int = 0

    def as_dict(self) -> dict:
        return {
            "readings_total": self.readings_total,
            "dropped_unknown_channel": self.dropped_unknown_channel,
            "queue_overflow": self.queue_overflow,
            "active_connections": self.active_connections,
        }


@dataclass(frozen=True)
class EventFiring:
    """One unsatisfied-to-satisfied transition of a channel's condition."""

    channel: int
    event_name: str
    value: float
    fired_at: datetime = field(compare=False)


class FiringQueue:
    """Bounded single-consumer handoff from ingestion to the notifier.

    put() is synchronous and never blocks: when full, the oldest firing
    is dropped and metrics.queue_overflow incremented.
    """

    def __init__(self, capacity: int = DEFAULT_QUEUE_CAPACITY, metrics: Metrics | None = None):
        if capacity < 1:
            raise ValueError("queue capacity must be >= 1")
        self._items: deque[EventFiring] = deque()
        self._capacity = capacity
        self._metrics = metrics
        self._ready = asyncio.Event()

    def put(self, firing: EventFiring) -> None:
        if len(self._items) >= self._capacity:
            self._items.popleft()
            if self._metrics is not None:
                self._metrics.queue_overflow += 1
        self._items.append(firing)
        self._ready.set()

    async def get(self) -> EventFiring:
        while not self._items:
            self._ready.clear()
            await self._ready.wait()
        return self._items.popleft()

    def __len__(self) -> int:
        return len(self._items)


class SensorMonitor:
    """Per-reading pipeline: record into the registry, fire on edges."""

    def __init__(self, registry: Registry, metrics: Metrics | None = None):
        self.registry = registry
        self.metrics = metrics if metrics is not None else Metrics()
        self._last_fired: dict[int, float] = {}  # channel id -> received_at of last firing

    def on_reading(self, reading: Reading) -> list[EventFiring]:
        """Update state; return 0 or 1 firings.

        Readings for unknown channels are counted and dropped; sensor
        fleets are heterogeneous, so the connection stays open.
        """
        try:
            prev = self.registry.record_reading(reading)
        except UnknownChannel:
            self.metrics.dropped_unknown_channel += 1
            return []
        self.metrics.readings_total += 1

        channel = self.registry.channel_by_id(reading.channel)
        if not evaluate(channel.condition, reading.value):
            return []

        rising_edge = prev is None or not evaluate(channel.condition, prev)
        held_long_enough = (
            channel.retrigger_interval is not None
            and reading.received_at - self._last_fired.get(channel.id, float("-inf"))
            >= channel.retrigger_interval
        )
        if not (rising_edge or held_long_enough):
            return []
        self._last_fired[channel.id] = reading.received_at
        return [
            EventFiring(
                channel=channel.id,
                event_name=channel.name,
                value=reading.value,
                fired_at=datetime.now(timezone.utc),
            )
        ]


async def handle_sensor_connection(stream: LineStream, monitor: SensorMonitor,
                                   queue: FiringQueue, *,
                                   read_timeout: float = DEFAULT_READ_TIMEOUT) -> None:
    """Serve one sensor connection until EOF, timeout, or a malformed line.

    A malformed line terminates only this connection; readings for unknown
    channels are dropped without closing it.
    """
    metrics = monitor.metrics
    metrics.active_connections += 1
    try:
        while True:
            try:
                frame = await asyncio.wait_for(stream.read_frame(), read_timeout)
            except asyncio.TimeoutError:
                log.debug("sensor %s idle past %ss, reaping", stream.peer, read_timeout)
                return
            except FrameTooLong:
                log.warning("sensor %s sent an overlong frame, closing", stream.peer)
                return
            if frame is None:
                return
            try:
                reading = decode_reading(frame)
            except DecodeError as exc:
                log.warning("sensor %s sent a malformed reading (%s), closing", stream.peer, exc)
                return
            for firing in monitor.on_reading(reading):
                queue.put(firing)
    finally:
        metrics.active_connections -= 1


async def serve_sensors(host: str, port: int, monitor: SensorMonitor, queue: FiringQueue,
                        *, read_timeout: float = DEFAULT_READ_TIMEOUT) -> asyncio.Server:
    """Listen for sensor nodes; each connection is handled independently."""

    async def handler(reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        stream = LineStream(reader, writer)
        try:
            await handle_sensor_connection(stream, monitor, queue, read_timeout=read_timeout)
        finally:
            await stream.close()

    return await asyncio.start_server(handler, host, port, limit=MAX_FRAME_BYTES, backlog=512)
