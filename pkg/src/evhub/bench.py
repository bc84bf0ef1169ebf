"""Desk-scale experiment harnesses: notification latency and memory growth.

Both experiments drive a real gatewayd subprocess over loopback. The
latency experiment measures the gateway-internal pipeline - from writing
a threshold-crossing reading at the sensor socket to the first
notification arriving at the in-process mock transports. Physical
push/GSM delivery time is deliberately out of the measurement; absolute
numbers from hardware deployments are not comparable.

Memory samples the gateway process's resident set size while subscribers
are added through the real protocol; numbers are platform-dependent and
only trends are meaningful.
"""

from __future__ import annotations

import asyncio
import json
import statistics
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import psutil

from .mocks import MockModem, MockPushServer
from .model import Action, Command
from .client import ClientSession
from .registry import hash_password
from .wire import encode_reading

BENCH_ADMIN = ("admin", "bench-admin-pw")
BENCH_SUBSCRIBER = ("subscriber", "bench-subscriber-pw")
PROBE_EVENT = "bench_probe"
PROBE_CHANNEL = 1


@dataclass(frozen=True)
class LatencySample:
    """One measured firing: injection and first-notification stamps."""

    injected_at: float
    observed_at: float

    @property
    def delta_ms(self) -> float:
        return (self.observed_at - self.injected_at) * 1000.0


@dataclass
class LatencyStats:
    samples: list[LatencySample]
    failures: int

    @property
    def runs(self) -> int:
        return len(self.samples) + self.failures

    @property
    def mean_ms(self) -> float:
        return statistics.fmean(s.delta_ms for s in self.samples)

    @property
    def p50_ms(self) -> float:
        return statistics.median(s.delta_ms for s in self.samples)

    @property
    def p99_ms(self) -> float:
        deltas = sorted(s.delta_ms for s in self.samples)
        index = max(0, min(len(deltas) - 1, round(0.99 * len(deltas)) - 1))
        return deltas[index]

    def as_dict(self) -> dict:
        out = {"runs": self.runs, "failures": self.failures}
        if self.samples:
            out.update(mean_ms=round(self.mean_ms, 3), p50_ms=round(self.p50_ms, 3),
                       p99_ms=round(self.p99_ms, 3))
        return out


class GatewayProcess:
    """A gatewayd subprocess bound to ephemeral loopback ports."""

    def __init__(self, config: dict, workdir: Path):
        self.config_path = workdir / "gateway.json"
        self.config_path.write_text(json.dumps(config, indent=2), encoding="utf-8")
        self.proc: asyncio.subprocess.Process | None = None
        self.ready: dict = {}

    async def start(self) -> dict:
        self.proc = await asyncio.create_subprocess_exec(
            sys.executable, "-m", "evhub.cli.gatewayd", str(self.config_path),
            stdout=asyncio.subprocess.PIPE,
        )
        line = await asyncio.wait_for(self.proc.stdout.readline(), 20.0)
        if not line:
            raise RuntimeError("gatewayd exited before becoming ready")
        self.ready = json.loads(line)
        return self.ready

    @property
    def pid(self) -> int:
        return self.ready["pid"]

    @property
    def sensor_port(self) -> int:
        return self.ready["sensor"]["port"]

    def client_url(self, kind: str = "tcp") -> str:
        for client in self.ready["clients"]:
            if client["kind"] == kind:
                if "path" in client:
                    return f"unix://{client['path']}"
                scheme = {"tcp": "tcp", "tcp+tls": "tls", "websocket": "ws"}[client["kind"]]
                return f"{scheme}://127.0.0.1:{client['port']}"
        raise KeyError(f"gateway has no {kind!r} client endpoint")

    def kill(self) -> None:
        if self.proc is not None and self.proc.returncode is None:
            self.proc.kill()

    async def stop(self) -> None:
        if self.proc is None:
            return
        if self.proc.returncode is None:
            self.proc.terminate()
            try:
                await asyncio.wait_for(self.proc.wait(), 10.0)
            except asyncio.TimeoutError:
                self.proc.kill()
        await self.proc.wait()


def base_config(workdir: Path, *, channels: list[dict], push_url: str | None = None,
                modem_path: str | None = None, snapshot: bool = True,
                queue_capacity: int = 4096) -> dict:
    """Config shared by the bench experiments: loopback, ephemeral ports."""
    config: dict = {
        "channels": channels,
        "accounts": [
            {"role": "Admin", "name": BENCH_ADMIN[0],
             "digest": hash_password(BENCH_ADMIN[1], iterations=1000)},
            {"role": "Subscriber", "name": BENCH_SUBSCRIBER[0],
             "digest": hash_password(BENCH_SUBSCRIBER[1], iterations=1000)},
        ],
        "sensor": {"host": "127.0.0.1", "port": 0},
        "clients": [{"kind": "tcp", "host": "127.0.0.1", "port": 0}],
        "notify": {"queue_capacity": queue_capacity},
    }
    if snapshot:
        config["snapshot_path"] = str(workdir / "state.json")
    if push_url is not None:
        config["push"] = {"url": push_url, "timeout": 5.0}
    if modem_path is not None:
        config["modem"] = {"path": modem_path, "step_timeout": 5.0}
    return config


# ── latency ──────────────────────────────────────────────────────────

def run_latency(runs: int, *, use_push: bool = True, use_sms: bool = True,
                run_timeout: float = 10.0) -> LatencyStats:
    """Inject `runs` threshold crossings and time the first notification.

    The condition is re-armed between runs by a below-threshold reading on
    the same connection, so ordering is guaranteed. A run that produces no
    notification within run_timeout counts as a failure.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    return asyncio.run(_latency_async(runs, use_push, use_sms, run_timeout))


async def _latency_async(runs: int, use_push: bool, use_sms: bool,
                         run_timeout: float) -> LatencyStats:
    with tempfile.TemporaryDirectory(prefix="evhub-bench-") as tmp:
        workdir = Path(tmp)
        push = MockPushServer().start() if use_push else None
        modem = await MockModem(str(workdir / "modem.sock")).start() if use_sms else None
        gateway = GatewayProcess(
            base_config(
                workdir,
                channels=[{
                    "id": PROBE_CHANNEL, "name": PROBE_EVENT,
                    "condition": {"kind": "threshold", "op": "gt", "threshold": 50.0},
                    "policy": {"push": True, "sms": True},
                }],
                push_url=push.url if push else None,
                modem_path=str(workdir / "modem.sock") if modem else None,
                snapshot=False,
            ),
            workdir,
        )
        try:
            await gateway.start()
            admin = await ClientSession.connect(gateway.client_url(), *BENCH_ADMIN)
            response = await admin.send(Command(
                Action.ADD_SUBSCRIBER, phone="+84900000001", fcm_id="bench-token",
                event=PROBE_EVENT))
            assert response.is_ok, response.desc
            await admin.close()

            reader, writer = await asyncio.open_connection("127.0.0.1", gateway.sensor_port)
            samples: list[LatencySample] = []
            failures = 0
            try:
                for _ in range(runs):
                    if push:
                        push.clear()
                    if modem:
                        modem.messages.clear()
                    injected_at = time.monotonic()
                    writer.write(encode_reading(PROBE_CHANNEL, 60.0) + b"\n")
                    await writer.drain()
                    observed_at = await _first_observation(push, modem, run_timeout)
                    if observed_at is None:
                        failures += 1
                    else:
                        samples.append(LatencySample(injected_at, observed_at))
                    writer.write(encode_reading(PROBE_CHANNEL, 40.0) + b"\n")
                    await writer.drain()
            finally:
                writer.close()
            return LatencyStats(samples, failures)
        finally:
            await gateway.stop()
            if push:
                push.stop()
            if modem:
                await modem.stop()


async def _first_observation(push: MockPushServer | None, modem: MockModem | None,
                             timeout: float) -> float | None:
    """Earliest receipt stamp across the mock transports, or None on timeout."""
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        stamps = []
        if push is not None:
            stamps.extend(record.at for record in push.snapshot())
        if modem is not None:
            stamps.extend(record.at for record in modem.messages)
        if stamps:
            return min(stamps)
        await asyncio.sleep(0.001)
    return None


# ── memory ───────────────────────────────────────────────────────────

def run_memory(counts: list[int]) -> list[tuple[int, int]]:
    """RSS of the gateway process at each cumulative subscriber count.

    Subscribers are added through the real protocol (AddSubscriber over an
    admin session). Counts must be nondecreasing. Returns (count, rss_kb)
    rows.
    """
    if any(b < a for a, b in zip(counts, counts[1:])):
        raise ValueError("counts must be nondecreasing")
    if not counts:
        return []
    return asyncio.run(_memory_async(list(counts)))


async def _memory_async(counts: list[int]) -> list[tuple[int, int]]:
    with tempfile.TemporaryDirectory(prefix="evhub-bench-") as tmp:
        workdir = Path(tmp)
        gateway = GatewayProcess(
            base_config(
                workdir,
                channels=[{
                    "id": PROBE_CHANNEL, "name": PROBE_EVENT,
                    "condition": {"kind": "boolean_flag"},
                    "policy": {"push": True},
                }],
            ),
            workdir,
        )
        try:
            await gateway.start()
            process = psutil.Process(gateway.pid)
            admin = await ClientSession.connect(gateway.client_url(), *BENCH_ADMIN)
            rows: list[tuple[int, int]] = []
            current = 0
            for count in counts:
                while current < count:
                    current += 1
                    response = await admin.send(Command(
                        Action.ADD_SUBSCRIBER, phone=f"+849{current:08d}",
                        fcm_id=f"token-{current}", event=PROBE_EVENT))
                    assert response.is_ok, response.desc
                rows.append((count, process.memory_info().rss // 1024))
            await admin.close()
            return rows
        finally:
            await gateway.stop()


def memory_csv(rows: list[tuple[int, int]]) -> str:
    lines = ["subscribers,rss_kb"]
    lines.extend(f"{count},{rss_kb}" for count, rss_kb in rows)
    return "\n".join(lines) + "\n"
