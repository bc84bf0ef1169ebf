"""Gateway assembly: wires registry, ingestion, sessions, and notification
together and runs every configured listener.

State is persisted to the snapshot file after every successful mutating
command (before its response leaves) and once more on clean shutdown, so
a crash loses at most the command in flight.
"""

from __future__ import annotations

import asyncio
import logging
import os
import tempfile
from pathlib import Path

from .config import GatewayConfig
from .ingest import FiringQueue, Metrics, SensorMonitor, serve_sensors
from .notify import ModemLine, Notifier, PushSender
from .registry import Registry
from .sessions import CommandExecutor, run_session
from .transports import Listener, serve

log = logging.getLogger(__name__)


class Gateway:
    """One configured gateway instance; start listeners, run, stop."""

    def __init__(self, config: GatewayConfig):
        self.config = config
        self.registry = Registry(channels=config.channels, accounts=config.accounts)
        self._snapshot_path = Path(config.snapshot_path) if config.snapshot_path else None
        if self._snapshot_path is not None and self._snapshot_path.exists():
            self.registry.merge_snapshot(self._snapshot_path.read_bytes())
            log.info("restored snapshot from %s", self._snapshot_path)

        self.metrics = Metrics()
        self.queue = FiringQueue(capacity=config.notify.queue_capacity, metrics=self.metrics)
        self.monitor = SensorMonitor(self.registry, self.metrics)

        push = None
        if config.push is not None:
            push = PushSender(
                config.push.url,
                auth_header=config.push.auth_header,
                timeout=config.push.timeout,
                max_in_flight=config.notify.push_concurrency,
            )
        modem = None
        if config.modem is not None:
            modem = ModemLine(config.modem.path, step_timeout=config.modem.step_timeout)
        self.notifier = Notifier(
            self.registry,
            self.queue,
            push=push,
            modem=modem,
            retries=config.notify.retries,
            retry_backoff=config.notify.retry_backoff,
            call_mode=config.notify.call_mode,
            ring_seconds=config.modem.ring_seconds if config.modem else 15.0,
        )
        self.executor = CommandExecutor(self.registry, self.metrics, persist=self.persist)

        self._sensor_server: asyncio.Server | None = None
        self._listeners: list[Listener] = []
        self._notifier_task: asyncio.Task | None = None

    # ── lifecycle ────────────────────────────────────────────────────

    async def start(self) -> None:
        self._sensor_server = await serve_sensors(
            self.config.sensor.host, self.config.sensor.port,
            self.monitor, self.queue, read_timeout=self.config.sensor.read_timeout,
        )
        for endpoint in self.config.clients:
            self._listeners.append(await serve(endpoint, self._handle_client))
        self._notifier_task = asyncio.create_task(self.notifier.run(), name="notifier")
        log.info("gateway up: sensors on %s, %d client endpoint(s)",
                 self.sensor_port, len(self._listeners))

    async def stop(self) -> None:
        if self._notifier_task is not None:
            self._notifier_task.cancel()
            try:
                await self._notifier_task
            except asyncio.CancelledError:
                pass
        if self._sensor_server is not None:
            self._sensor_server.close()
            await self._sensor_server.wait_closed()
        for listener in self._listeners:
            await listener.close()
        if self.notifier.push is not None:
            await self.notifier.push.close()
        if self.notifier.modem is not None:
            await self.notifier.modem.close()
        self.persist()

    async def _handle_client(self, stream) -> None:
        await run_session(
            stream, self.executor,
            init_timeout=self.config.session.init_timeout,
            idle_timeout=self.config.session.idle_timeout,
        )

    # ── introspection ────────────────────────────────────────────────

    @property
    def sensor_port(self) -> int:
        return self._sensor_server.sockets[0].getsockname()[1]

    def describe(self) -> dict:
        """Bound addresses for the ready line and for tests."""
        return {
            "sensor": {"host": self.config.sensor.host, "port": self.sensor_port},
            "clients": [listener.describe() for listener in self._listeners],
            "pid": os.getpid(),
        }

    # ── durability ───────────────────────────────────────────────────

    def persist(self) -> None:
        """Atomically write the registry snapshot (temp file then rename)."""
        if self._snapshot_path is None:
            return
        data = self.registry.snapshot()
        fd, tmp = tempfile.mkstemp(
            dir=self._snapshot_path.parent, prefix=self._snapshot_path.name, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as handle:
                handle.write(data)
            os.replace(tmp, self._snapshot_path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
