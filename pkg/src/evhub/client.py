"""Minimal client-side session helper for tools, benches, and tests."""

from __future__ import annotations

import asyncio

from .model import Action, Command, Response
from .transports import open_stream
from .wire import decode_response, encode_command


class SessionRejected(Exception):
    """The gateway refused session initiation."""


class ClientSession:
    """One authenticated command session in request-response lockstep."""

    def __init__(self, stream, reply_timeout: float = 10.0):
        self._stream = stream
        self._reply_timeout = reply_timeout

    @classmethod
    async def connect(cls, url: str, account: str, password: str, *,
                      cafile: str | None = None, insecure: bool = False,
                      reply_timeout: float = 10.0) -> "ClientSession":
        stream = await open_stream(url, cafile=cafile, insecure=insecure)
        session = cls(stream, reply_timeout)
        response = await session.send(
            Command(Action.SESSION_INITIATION, account=account, password=password))
        if not response.is_ok:
            await session.close()
            raise SessionRejected(response.desc)
        return session

    async def send(self, cmd: Command) -> Response:
        raw = await self.send_raw(encode_command(cmd))
        return decode_response(raw)

    async def send_raw(self, frame: bytes) -> bytes:
        """Send one pre-encoded frame and return the raw response frame."""
        await self._stream.write_frame(frame)
        raw = await asyncio.wait_for(self._stream.read_frame(), self._reply_timeout)
        if raw is None:
            raise ConnectionError("gateway closed the session")
        return raw

    async def close(self) -> None:
        await self._stream.close()
