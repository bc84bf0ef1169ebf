"""Listener layer: every client transport behind one framed-stream shape.

A frame is one newline-terminated JSON text on byte-stream transports
(TCP, TLS, local unix socket) or one text message on the WebSocket
bridge. Session logic never sees which transport it is talking to.
"""

from __future__ import annotations

import asyncio
import logging
import ssl
from urllib.parse import urlparse

import websockets
from websockets.asyncio.client import connect as ws_connect
from websockets.asyncio.server import serve as ws_serve

from .config import ClientEndpoint
from .wire import MAX_FRAME_BYTES

log = logging.getLogger(__name__)


class FrameTooLong(Exception):
    """A peer sent a frame over the 64 KiB cap; the stream is desynced."""


class LineStream:
    """Newline-framed stream over an asyncio reader/writer pair."""

    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        self._reader = reader
        self._writer = writer

    async def read_frame(self) -> bytes | None:
        """Next frame without its terminator; None at end of stream."""
        try:
            line = await self._reader.readline()
        except (asyncio.LimitOverrunError, ValueError):
            raise FrameTooLong(f"frame exceeds {MAX_FRAME_BYTES} bytes") from None
        except (ConnectionError, ssl.SSLError):
            return None
        if not line:
            return None
        if not line.endswith(b"\n"):
            # stream ended mid-frame; the partial line is not a frame
            return None
        return line[:-1]

    async def write_frame(self, payload: bytes) -> None:
        if b"\n" in payload:
            raise ValueError("frame payload must not contain newlines")
        if len(payload) + 1 > MAX_FRAME_BYTES:
            raise FrameTooLong(f"frame exceeds {MAX_FRAME_BYTES} bytes")
        self._writer.write(payload + b"\n")
        await self._writer.drain()

    async def close(self) -> None:
        try:
            self._writer.close()
            await self._writer.wait_closed()
        except (ConnectionError, ssl.SSLError):
            pass

    @property
    def peer(self) -> str:
        info = self._writer.get_extra_info("peername")
        return str(info) if info else "?"


class WebSocketStream:
    """One frame per WebSocket text message; size-capped by the server."""

    def __init__(self, ws):
        self._ws = ws

    async def read_frame(self) -> bytes | None:
        try:
            message = await self._ws.recv()
        except websockets.exceptions.ConnectionClosed:
            return None
        if isinstance(message, str):
            return message.encode("utf-8")
        return message

    async def write_frame(self, payload: bytes) -> None:
        try:
            await self._ws.send(payload.decode("utf-8"))
        except websockets.exceptions.ConnectionClosed as exc:
            raise ConnectionResetError(str(exc)) from None

    async def close(self) -> None:
        await self._ws.close()

    @property
    def peer(self) -> str:
        return str(getattr(self._ws, "remote_address", "?"))


def _server_ssl_context(certfile: str, keyfile: str) -> ssl.SSLContext:
    ctx = ssl.SSLContext(ssl.PROTOCOL_TLS_SERVER)
    ctx.load_cert_chain(certfile, keyfile)
    return ctx


async def serve(endpoint: ClientEndpoint, on_connection) -> "Listener":
    """Start one listener; on_connection(stream) runs per accepted peer.

    TLS endpoints finish the handshake before the stream surfaces; a
    failed handshake drops only that connection. Bind failures propagate
    (fatal at startup).
    """

    async def handle_stream(reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        stream = LineStream(reader, writer)
        try:
            await on_connection(stream)
        except Exception:
            log.exception("connection handler failed for %s", stream.peer)
        finally:
            await stream.close()

    if endpoint.kind == "tcp":
        ssl_ctx = _server_ssl_context(endpoint.certfile, endpoint.keyfile) if endpoint.tls else None
        server = await asyncio.start_server(
            handle_stream, endpoint.host, endpoint.port,
            limit=MAX_FRAME_BYTES, ssl=ssl_ctx, backlog=512,
        )
        port = server.sockets[0].getsockname()[1]
        return Listener(endpoint.kind + ("+tls" if endpoint.tls else ""), server,
                        host=endpoint.host, port=port)

    if endpoint.kind == "unix":
        server = await asyncio.start_unix_server(handle_stream, endpoint.path, limit=MAX_FRAME_BYTES)
        return Listener("unix", server, path=endpoint.path)

    if endpoint.kind == "websocket":
        async def handle_ws(ws):
            stream = WebSocketStream(ws)
            try:
                await on_connection(stream)
            except Exception:
                log.exception("connection handler failed for %s", stream.peer)
            finally:
                await stream.close()

        server = await ws_serve(handle_ws, endpoint.host, endpoint.port, max_size=MAX_FRAME_BYTES)
        port = next(iter(server.sockets)).getsockname()[1]
        return Listener("websocket", server, host=endpoint.host, port=port)

    raise ValueError(f"unknown endpoint kind {endpoint.kind!r}")


class Listener:
    """Handle to one running listener (for shutdown and address discovery)."""

    def __init__(self, kind: str, server, host: str | None = None,
                 port: int | None = None, path: str | None = None):
        self.kind = kind
        self.host = host
        self.port = port
        self.path = path
        self._server = server

    async def close(self) -> None:
        self._server.close()
        await self._server.wait_closed()

    def describe(self) -> dict:
        if self.path is not None:
            return {"kind": self.kind, "path": self.path}
        return {"kind": self.kind, "host": self.host, "port": self.port}


async def open_stream(url: str, *, cafile: str | None = None,
                      insecure: bool = False, timeout: float = 10.0):
    """Client-side connect. URL schemes: tcp://host:port, tls://host:port,
    unix://path, ws://host:port."""
    parsed = urlparse(url)
    scheme = parsed.scheme or "tcp"

    if scheme == "tcp":
        reader, writer = await asyncio.wait_for(
            asyncio.open_connection(parsed.hostname, parsed.port, limit=MAX_FRAME_BYTES), timeout)
        return LineStream(reader, writer)

    if scheme == "tls":
        ctx = ssl.create_default_context(cafile=cafile)
        if insecure:
            ctx.check_hostname = False
            ctx.verify_mode = ssl.CERT_NONE
        reader, writer = await asyncio.wait_for(
            asyncio.open_connection(parsed.hostname, parsed.port,
                                    limit=MAX_FRAME_BYTES, ssl=ctx), timeout)
        return LineStream(reader, writer)

    if scheme == "unix":
        path = (parsed.netloc or "") + (parsed.path or "")
        reader, writer = await asyncio.wait_for(
            asyncio.open_unix_connection(path, limit=MAX_FRAME_BYTES), timeout)
        return LineStream(reader, writer)

    if scheme == "ws":
        ws = await asyncio.wait_for(ws_connect(url, max_size=MAX_FRAME_BYTES), timeout)
        return WebSocketStream(ws)

    raise ValueError(f"unknown gateway URL scheme {scheme!r}")
