"""Notification fan-out: one delivery attempt per firing, subscriber, and
enabled transport.

Push goes over HTTP to the configured endpoint (bounded concurrency);
SMS and calls share a single modem, so those dialogues run on a strictly
serial FIFO lane. A failure on one transport never affects another.

Calls default to emergency escalation: placed only when SMS is disabled
for the channel or the SMS attempt failed. The suppressed attempt is
still recorded (outcome pending) so fan-out cardinality stays
subscribers x enabled transports.
"""

from __future__ import annotations

import asyncio
import logging
import os
import stat as stat_module
from collections import deque
from dataclasses import dataclass
from enum import Enum

import httpx

from .ingest import EventFiring, FiringQueue
from .model import NotificationPolicy, SubscriberAddress
from .registry import Registry, UnknownEvent

log = logging.getLogger(__name__)

SMS_MAX_CHARS = 160
CTRL_Z = b"\x1a"


class Via(Enum):
    PUSH = "push"
    SMS = "sms"
    CALL = "call"


@dataclass(frozen=True)
class Outcome:
    """Delivery result: delivered, failed (with a reason), or pending."""

    status: str
    reason: str | None = None

    @classmethod
    def delivered(cls) -> "Outcome":
        return cls("delivered")

    @classmethod
    def failed(cls, reason: str) -> "Outcome":
        return cls("failed", reason)

    @classmethod
    def pending(cls) -> "Outcome":
        return cls("pending")

    @property
    def ok(self) -> bool:
        return self.status == "delivered"


@dataclass(frozen=True)
class Notification:
    """One delivery attempt record."""

    firing: EventFiring
    target: SubscriberAddress
    via: Via
    outcome: Outcome


def format_value(value: float) -> str:
    """Integral values render without a decimal part; others via repr."""
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def render_message(firing: EventFiring) -> str:
    """Deterministic alert text, truncated to one SMS."""
    stamp = firing.fired_at.strftime("%Y-%m-%dT%H:%M:%SZ")
    text = f"{firing.event_name} triggered: value={format_value(firing.value)} at {stamp}"
    return text[:SMS_MAX_CHARS]


class PushSender:
    """POSTs one JSON body per notification to the push endpoint."""

    def __init__(self, url: str, *, auth_header: str | None = None,
                 timeout: float = 10.0, max_in_flight: int = 64):
        self.url = url
        self._headers = {"Authorization": auth_header} if auth_header else {}
        self._timeout = timeout
        self._gate = asyncio.Semaphore(max_in_flight)
        self._client = httpx.AsyncClient()

    async def send(self, target: SubscriberAddress, firing: EventFiring) -> Outcome:
        body = {
            "to": target.push_token,
            "event": firing.event_name,
            "value": firing.value,
            "fired_at": firing.fired_at.strftime("%Y-%m-%dT%H:%M:%S.%fZ"),
        }
        try:
            async with self._gate:
                response = await self._client.post(
                    self.url, json=body, headers=self._headers, timeout=self._timeout)
        except httpx.TimeoutException:
            return Outcome.failed("timeout")
        except httpx.HTTPError as exc:
            return Outcome.failed(f"unreachable: {exc.__class__.__name__}")
        if 200 <= response.status_code < 300:
            return Outcome.delivered()
        return Outcome.failed(f"http_{response.status_code}")

    async def close(self) -> None:
        await self._client.aclose()


class ModemLine:
    """The gateway's one GSM modem: serial AT dialogues, FIFO-ordered.

    The stream endpoint is a filesystem path: a unix socket (the mock, or
    a socat bridge) or a serial character device opened raw. A dialogue
    holds the lane exclusively, so transcripts never interleave.
    """

    def __init__(self, path: str, *, step_timeout: float = 30.0):
        self.path = path
        self.step_timeout = step_timeout
        self._lock = asyncio.Lock()
        self._reader: asyncio.StreamReader | None = None
        self._writer: asyncio.StreamWriter | None = None

    async def _connect(self) -> None:
        if self._writer is not None:
            return
        mode = os.stat(self.path).st_mode
        if stat_module.S_ISSOCK(mode):
            self._reader, self._writer = await asyncio.open_unix_connection(self.path)
        else:
            self._reader, self._writer = await _open_serial(self.path)

    def _drop(self) -> None:
        if self._writer is not None:
            self._writer.close()
        self._reader = self._writer = None

    async def _send(self, data: bytes) -> None:
        self._writer.write(data)
        await self._writer.drain()

    async def _read_reply_line(self) -> str:
        """Next nonempty CR/LF-terminated line from the modem."""
        while True:
            line = await self._reader.readline()
            if not line:
                raise ConnectionResetError("modem stream closed")
            text = line.strip(b"\r\n")
            if text:
                return text.decode("ascii", errors="replace")

    async def _read_prompt(self) -> None:
        """Consume bytes until the '> ' message prompt appears."""
        buffer = b""
        while not buffer.endswith(b"> "):
            chunk = await self._reader.read(1)
            if not chunk:
                raise ConnectionResetError("modem stream closed")
            buffer += chunk
            if buffer.endswith(b"ERROR\r\n"):
                raise _StepError("ERROR")

    async def _expect_ok(self) -> None:
        reply = await self._read_reply_line()
        if reply != "OK":
            raise _StepError(reply)

    async def sms(self, phone: str, text: str) -> Outcome:
        """Send one SMS: CMGF text mode, CMGS with the number, body + Ctrl-Z."""
        async with self._lock:
            step = "cmgf"
            try:
                await self._connect()
                await asyncio.wait_for(self._step_cmgf(), self.step_timeout)
                step = "cmgs"
                await asyncio.wait_for(self._step_cmgs(phone), self.step_timeout)
                step = "body"
                await asyncio.wait_for(self._step_body(text), self.step_timeout)
                return Outcome.delivered()
            except asyncio.TimeoutError:
                self._drop()
                return Outcome.failed(f"timeout@{step}")
            except _StepError:
                return Outcome.failed(step)
            except (ConnectionError, OSError):
                self._drop()
                return Outcome.failed("io")

    async def _step_cmgf(self) -> None:
        await self._send(b"AT+CMGF=1\r\n")
        await self._expect_ok()

    async def _step_cmgs(self, phone: str) -> None:
        await self._send(f'AT+CMGS="{phone}"\r\n'.encode("ascii"))
        await self._read_prompt()

    async def _step_body(self, text: str) -> None:
        await self._send(text.encode("utf-8") + CTRL_Z)
        reply = await self._read_reply_line()
        if not reply.startswith("+CMGS:"):
            raise _StepError(reply)
        await self._expect_ok()

    async def call(self, phone: str, ring_seconds: float) -> Outcome:
        """Ring-only alert: dial, hold the ring, hang up."""
        async with self._lock:
            step = "atd"
            try:
                await self._connect()
                await asyncio.wait_for(self._send(f"ATD{phone};\r\n".encode("ascii")),
                                       self.step_timeout)
                reply = await asyncio.wait_for(self._read_reply_line(), self.step_timeout)
                if reply == "BUSY":
                    return Outcome.failed("busy")
                if reply == "NO CARRIER":
                    return Outcome.failed("no_carrier")
                if reply != "OK":
                    return Outcome.failed("atd")
                await asyncio.sleep(ring_seconds)
                step = "ath"
                await self._send(b"ATH\r\n")
                await asyncio.wait_for(self._expect_ok(), self.step_timeout)
                return Outcome.delivered()
            except asyncio.TimeoutError:
                self._drop()
                return Outcome.failed(f"timeout@{step}")
            except _StepError:
                return Outcome.failed(step)
            except (ConnectionError, OSError):
                self._drop()
                return Outcome.failed("io")

    async def close(self) -> None:
        self._drop()


class _StepError(Exception):
    pass


async def _open_serial(path: str) -> tuple[asyncio.StreamReader, asyncio.StreamWriter]:
    """Raw reader/writer over a character device (line speed and discipline
    are assumed preconfigured, e.g. via stty)."""
    loop = asyncio.get_running_loop()
    fd = os.open(path, os.O_RDWR | os.O_NOCTTY)
    reader = asyncio.StreamReader()
    await loop.connect_read_pipe(
        lambda: asyncio.StreamReaderProtocol(reader), os.fdopen(fd, "rb", buffering=0))
    write_transport, write_protocol = await loop.connect_write_pipe(
        asyncio.streams.FlowControlMixin, os.fdopen(os.dup(fd), "wb", buffering=0))
    writer = asyncio.StreamWriter(write_transport, write_protocol, reader, loop)
    return reader, writer


class Notifier:
    """Consumes firings from the ingest queue and fans each one out."""

    def __init__(self, registry: Registry, queue: FiringQueue, *,
                 push: PushSender | None = None, modem: ModemLine | None = None,
                 retries: int = 0, retry_backoff: float = 1.0,
                 call_mode: str = "escalation", ring_seconds: float = 15.0,
                 log_size: int = 1000):
        if call_mode not in ("escalation", "always"):
            raise ValueError(f"call_mode must be 'escalation' or 'always', got {call_mode!r}")
        self.registry = registry
        self.queue = queue
        self.push = push
        self.modem = modem
        self.retries = retries
        self.retry_backoff = retry_backoff
        self.call_mode = call_mode
        self.ring_seconds = ring_seconds
        self.delivery_log: deque[Notification] = deque(maxlen=log_size)

    async def run(self) -> None:
        """Notifier task body: dispatch firings until cancelled."""
        while True:
            firing = await self.queue.get()
            await self.dispatch(firing)

    async def dispatch(self, firing: EventFiring) -> list[Notification]:
        """Fan one firing out to every subscriber over every enabled transport.

        Attempts for distinct subscribers run concurrently; outcomes land
        in the delivery log. Never raises.
        """
        try:
            channel = self.registry.channel_by_name(firing.event_name)
            subscribers = self.registry.list_subscribers(firing.event_name)
        except UnknownEvent:
            log.warning("firing for unknown event %r dropped", firing.event_name)
            return []
        text = render_message(firing)
        batches = await asyncio.gather(
            *(self._deliver(firing, channel.policy, target, text) for target in subscribers)
        )
        notifications = [n for batch in batches for n in batch]
        self.delivery_log.extend(notifications)
        return notifications

    async def _deliver(self, firing: EventFiring, policy: NotificationPolicy,
                       target: SubscriberAddress, text: str) -> list[Notification]:
        tasks = []
        if policy.push:
            tasks.append(self._push_attempt(firing, target))
        if policy.sms or policy.call:
            tasks.append(self._gsm_attempts(firing, policy, target, text))
        batches = await asyncio.gather(*tasks)
        return [n for batch in batches for n in batch]

    async def _push_attempt(self, firing: EventFiring, target: SubscriberAddress) -> list[Notification]:
        if self.push is None:
            outcome = Outcome.failed("no_push_endpoint")
        else:
            outcome = await self._attempt(lambda: self.push.send(target, firing))
        return [Notification(firing, target, Via.PUSH, outcome)]

    async def _gsm_attempts(self, firing: EventFiring, policy: NotificationPolicy,
                            target: SubscriberAddress, text: str) -> list[Notification]:
        """SMS then (conditionally) call; ordered because the call decision
        escalates from the SMS outcome."""
        notifications = []
        sms_outcome: Outcome | None = None
        if policy.sms:
            if self.modem is None:
                sms_outcome = Outcome.failed("no_modem")
            else:
                sms_outcome = await self._attempt(lambda: self.modem.sms(target.phone, text))
            notifications.append(Notification(firing, target, Via.SMS, sms_outcome))
        if policy.call:
            escalate = self.call_mode == "always" or not policy.sms or not sms_outcome.ok
            if not escalate:
                outcome = Outcome.pending()
            elif self.modem is None:
                outcome = Outcome.failed("no_modem")
            else:
                outcome = await self._attempt(
                    lambda: self.modem.call(target.phone, self.ring_seconds))
            notifications.append(Notification(firing, target, Via.CALL, outcome))
        return notifications

    async def _attempt(self, send) -> Outcome:
        outcome = await send()
        for _ in range(self.retries):
            if outcome.ok:
                break
            await asyncio.sleep(self.retry_backoff)
            outcome = await send()
        return outcome
