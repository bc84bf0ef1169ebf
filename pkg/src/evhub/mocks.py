"""In-process doubles for the external notification endpoints.

MockPushServer stands in for the push service: it records every JSON body
it receives, with a monotonic receipt stamp, and answers a configurable
status. MockModem is a scriptable SIM800-style modem behind a unix
socket: it speaks the text-mode SMS and dial dialogues and keeps a
byte-exact transcript of everything the gateway sent.

Both are part of the package because the bench harness and the fleet
simulator rely on them; swapping in real endpoints is a config change.
"""

from __future__ import annotations

import asyncio
import json
import logging
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

log = logging.getLogger(__name__)


@dataclass
class PushRecord:
    body: dict
    headers: dict
    at: float  # monotonic receipt time


class MockPushServer:
    """Threaded loopback HTTP endpoint that records push bodies."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self.received: list[PushRecord] = []
        self.status = 200
        self.delay = 0.0
        self._lock = threading.Lock()
        outer = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"  # keep-alive; clients pool connections

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                raw = self.rfile.read(length)
                at = time.monotonic()
                try:
                    body = json.loads(raw)
                except json.JSONDecodeError:
                    body = {"_raw": raw.decode("utf-8", errors="replace")}
                if outer.delay:
                    time.sleep(outer.delay)
                with outer._lock:
                    outer.received.append(PushRecord(body, dict(self.headers), at))
                    status = outer.status
                self.send_response(status)
                self.send_header("Content-Length", "2")
                self.end_headers()
                self.wfile.write(b"{}")

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer((host, port), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/push"

    def start(self) -> "MockPushServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def snapshot(self) -> list[PushRecord]:
        with self._lock:
            return list(self.received)

    def count(self) -> int:
        with self._lock:
            return len(self.received)

    def clear(self) -> None:
        with self._lock:
            self.received.clear()


@dataclass
class SmsRecord:
    phone: str
    text: str
    at: float


@dataclass
class CallRecord:
    phone: str
    at: float


@dataclass
class ModemScript:
    """Fault knobs for the mock modem; all off means the happy path."""

    fail_cmgf: bool = False     # reply ERROR to AT+CMGF=1
    silent_prompt: bool = False  # never send the '> ' prompt
    fail_body: bool = False     # reply ERROR instead of +CMGS after the body
    dial_reply: str = "OK"      # OK | BUSY | NO CARRIER | ERROR
    silent: bool = False        # accept bytes, never reply at all


class MockModem:
    """SIM800-flavored modem double on a unix socket.

    CR/LF line discipline: command lines end with CR or CRLF; replies are
    `\\r\\n<text>\\r\\n`, and the SMS body prompt is `\\r\\n> ` with no
    terminator. The full received byte stream lands in `transcript`.
    """

    def __init__(self, path: str, script: ModemScript | None = None):
        self.path = path
        self.script = script or ModemScript()
        self.transcript = bytearray()
        self.messages: list[SmsRecord] = []
        self.calls: list[CallRecord] = []
        self._server: asyncio.AbstractServer | None = None
        self._counter = 0

    async def start(self) -> "MockModem":
        self._server = await asyncio.start_unix_server(self._handle, self.path)
        return self

    async def stop(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        buffer = bytearray()
        awaiting_body_for: str | None = None
        try:
            while True:
                chunk = await reader.read(256)
                if not chunk:
                    return
                self.transcript.extend(chunk)
                buffer.extend(chunk)
                while True:
                    if awaiting_body_for is not None:
                        cut = buffer.find(b"\x1a")
                        if cut < 0:
                            break
                        body = bytes(buffer[:cut])
                        del buffer[:cut + 1]
                        await self._on_body(writer, awaiting_body_for, body)
                        awaiting_body_for = None
                        continue
                    cut = buffer.find(b"\r")
                    if cut < 0:
                        break
                    line = bytes(buffer[:cut]).strip(b"\r\n")
                    del buffer[:cut + 1]
                    if buffer[:1] == b"\n":
                        del buffer[:1]
                    if not line:
                        continue
                    awaiting_body_for = await self._on_command(writer, line.decode("ascii", "replace"))
        except (ConnectionError, asyncio.IncompleteReadError):
            return
        finally:
            writer.close()

    async def _reply(self, writer: asyncio.StreamWriter, text: str) -> None:
        if self.script.silent:
            return
        writer.write(f"\r\n{text}\r\n".encode("ascii"))
        await writer.drain()

    async def _on_command(self, writer: asyncio.StreamWriter, line: str) -> str | None:
        """React to one AT command line; returns the phone number when the
        modem enters SMS body mode."""
        if line == "AT+CMGF=1":
            await self._reply(writer, "ERROR" if self.script.fail_cmgf else "OK")
            return None
        if line.startswith('AT+CMGS="') and line.endswith('"'):
            if self.script.silent_prompt or self.script.silent:
                return None
            writer.write(b"\r\n> ")
            await writer.drain()
            return line[len('AT+CMGS="'):-1]
        if line.startswith("ATD") and line.endswith(";"):
            phone = line[3:-1]
            if self.script.dial_reply == "OK":
                self.calls.append(CallRecord(phone=phone, at=time.monotonic()))
            await self._reply(writer, self.script.dial_reply)
            return None
        if line == "ATH":
            await self._reply(writer, "OK")
            return None
        await self._reply(writer, "ERROR")
        return None

    async def _on_body(self, writer: asyncio.StreamWriter, phone: str, body: bytes) -> None:
        if self.script.fail_body:
            await self._reply(writer, "ERROR")
            return
        self._counter += 1
        self.messages.append(
            SmsRecord(phone=phone, text=body.decode("utf-8", "replace"), at=time.monotonic()))
        if not self.script.silent:
            writer.write(f"\r\n+CMGS: {self._counter}\r\n\r\nOK\r\n".encode("ascii"))
            await writer.drain()
