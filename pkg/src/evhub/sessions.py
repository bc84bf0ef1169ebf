"""Client sessions: the three-phase state machine and command execution.

A session moves through connection establishment, a command sequence,
and termination. Exactly one response is sent per received frame until
the session closes; notifications never travel on the command socket.

Failed establishment and malformed framing terminate the session;
unauthorized commands are ordinary command errors and leave it open.
"""

from __future__ import annotations

import asyncio
import logging
from enum import Enum

from .ingest import Metrics
from .model import Action, Command, Response, Role, SubscriberAddress, evaluate
from .registry import (
    NotSubscribed,
    Registry,
    UnknownAccount,
    UnknownEvent,
    AuthFailed,
)
from .transports import FrameTooLong
from .wire import (
    MalformedJson,
    MissingField,
    UnknownAction,
    decode_command,
    encode_response,
)

log = logging.getLogger(__name__)

DEFAULT_INIT_TIMEOUT = 10.0
DEFAULT_IDLE_TIMEOUT = 120.0

# Stable machine-readable desc codes.
DESC_OK = "ok"
DESC_UNAUTHORIZED = "unauthorized"
DESC_UNKNOWN_EVENT = "unknown_event"
DESC_UNKNOWN_ACCOUNT = "unknown_account"
DESC_AUTH_FAILED = "auth_failed"
DESC_NOT_SUBSCRIBED = "not_subscribed"
DESC_BAD_REQUEST = "bad_request"

# Action availability by role, exactly as the command set defines it.
PERMITTED: dict[Role, frozenset[Action]] = {
    Role.ADMIN: frozenset({
        Action.SESSION_INITIATION,
        Action.CHANGE_PASSWORD,
        Action.GET_SUBSCRIBER_LIST,
        Action.DEL_SUBSCRIBER,
        Action.ADD_SUBSCRIBER,
        Action.UPDATE,
    }),
    Role.SUBSCRIBER: frozenset({
        Action.SESSION_INITIATION,
        Action.SUBSCRIBE,
        Action.UNSUBSCRIBE,
        Action.UPDATE,
    }),
}


def authorize(role: Role, action: Action) -> bool:
    """Pure role-permission check over the full role-action matrix."""
    return action in PERMITTED[role]


class Phase(Enum):
    AWAITING_INIT = "awaiting_init"
    ESTABLISHED = "established"
    TERMINATED = "terminated"


class CommandExecutor:
    """Executes authorized commands against the registry.

    persist, when given, runs after every successful mutating command so
    the daemon can write a snapshot before the response leaves.
    """

    def __init__(self, registry: Registry, metrics: Metrics | None = None, persist=None):
        self.registry = registry
        self.metrics = metrics
        self._persist = persist

    def execute(self, role: Role, cmd: Command) -> Response:
        handler = self._HANDLERS[cmd.action]
        try:
            return handler(self, cmd)
        except UnknownEvent:
            return Response.make_error(DESC_UNKNOWN_EVENT)
        except NotSubscribed:
            return Response.make_error(DESC_NOT_SUBSCRIBED)
        except UnknownAccount:
            return Response.make_error(DESC_UNKNOWN_ACCOUNT)
        except ValueError as exc:
            # bad argument shapes, e.g. a phone that is not E.164-like
            return Response.make_error(DESC_BAD_REQUEST, detail=str(exc))

    def _done(self, mutated: bool = True) -> Response:
        if mutated and self._persist is not None:
            self._persist()
        return Response.make_ok(DESC_OK)

    def _do_subscribe(self, cmd: Command) -> Response:
        addr = SubscriberAddress(phone=cmd.phone, push_token=cmd.fcm_id)
        self.registry.subscribe(cmd.event, addr)
        return self._done()

    def _do_unsubscribe(self, cmd: Command) -> Response:
        self.registry.unsubscribe(cmd.event, cmd.phone)
        return self._done()

    def _do_add_subscriber(self, cmd: Command) -> Response:
        addr = SubscriberAddress(phone=cmd.phone, push_token=cmd.fcm_id)
        self.registry.admin_add_subscriber(cmd.event, addr)
        return self._done()

    def _do_del_subscriber(self, cmd: Command) -> Response:
        self.registry.admin_del_subscriber(cmd.event, cmd.phone)
        return self._done()

    def _do_change_password(self, cmd: Command) -> Response:
        self.registry.change_password(cmd.account, cmd.new_password)
        return self._done()

    def _do_get_subscriber_list(self, cmd: Command) -> Response:
        subscribers = self.registry.list_subscribers(cmd.event)
        return Response.make_ok(
            DESC_OK,
            subscribers=[{"phone": a.phone, "fcm_id": a.push_token} for a in subscribers],
        )

    def _do_update(self, cmd: Command) -> Response:
        board = []
        for channel in self.registry.channels():
            latest = self.registry.latest(channel.id)
            board.append({
                "event": channel.name,
                "value": latest[0] if latest is not None else None,
                "satisfied": evaluate(channel.condition, latest[0]) if latest is not None else False,
            })
        extras: dict = {"channels": board}
        if self.metrics is not None:
            extras["metrics"] = self.metrics.as_dict()
        return Response.make_ok(DESC_OK, **extras)

    _HANDLERS = {
        Action.SUBSCRIBE: _do_subscribe,
        Action.UNSUBSCRIBE: _do_unsubscribe,
        Action.ADD_SUBSCRIBER: _do_add_subscriber,
        Action.DEL_SUBSCRIBER: _do_del_subscriber,
        Action.CHANGE_PASSWORD: _do_change_password,
        Action.GET_SUBSCRIBER_LIST: _do_get_subscriber_list,
        Action.UPDATE: _do_update,
    }


class Session:
    """One client conversation, driven frame by frame.

    handle_frame returns (response or None, close flag); the caller owns
    the transport and applies both.
    """

    def __init__(self, executor: CommandExecutor):
        self.executor = executor
        self.phase = Phase.AWAITING_INIT
        self.role: Role | None = None

    def handle_frame(self, frame: bytes) -> tuple[Response | None, bool]:
        if self.phase is Phase.TERMINATED:
            return None, True
        try:
            cmd = decode_command(frame)
        except MalformedJson as exc:
            self.phase = Phase.TERMINATED
            return Response.make_error(DESC_BAD_REQUEST, detail=str(exc)), True
        except (UnknownAction, MissingField) as exc:
            if self.phase is Phase.AWAITING_INIT:
                self.phase = Phase.TERMINATED
                return Response.make_error(DESC_BAD_REQUEST, detail=str(exc)), True
            return Response.make_error(DESC_BAD_REQUEST, detail=str(exc)), False

        if self.phase is Phase.AWAITING_INIT:
            if cmd.action is not Action.SESSION_INITIATION:
                self.phase = Phase.TERMINATED
                return Response.make_error(DESC_BAD_REQUEST, detail="session not established"), True
            try:
                self.role = self.executor.registry.verify_credentials(cmd.account, cmd.password)
            except AuthFailed:
                self.phase = Phase.TERMINATED
                return Response.make_error(DESC_AUTH_FAILED), True
            self.phase = Phase.ESTABLISHED
            return Response.make_ok(DESC_OK, role=self.role.value), False

        # established
        if cmd.action is Action.SESSION_INITIATION:
            return Response.make_error(DESC_BAD_REQUEST, detail="session already established"), False
        if not authorize(self.role, cmd.action):
            return Response.make_error(DESC_UNAUTHORIZED), False
        return self.executor.execute(self.role, cmd), False


async def run_session(stream, executor: CommandExecutor, *,
                      init_timeout: float = DEFAULT_INIT_TIMEOUT,
                      idle_timeout: float = DEFAULT_IDLE_TIMEOUT) -> None:
    """Drive one session over any framed stream until it terminates.

    Inactivity past the phase's timeout closes the connection silently,
    as does the peer's EOF.
    """
    session = Session(executor)
    try:
        while True:
            timeout = init_timeout if session.phase is Phase.AWAITING_INIT else idle_timeout
            try:
                frame = await asyncio.wait_for(stream.read_frame(), timeout)
            except asyncio.TimeoutError:
                log.debug("session %s idle past %ss, closing", stream.peer, timeout)
                return
            except FrameTooLong:
                await _try_send(stream, Response.make_error(DESC_BAD_REQUEST, detail="frame too long"))
                return
            if frame is None:
                return
            response, close = session.handle_frame(frame)
            if response is not None:
                await stream.write_frame(encode_response(response))
            if close:
                return
    except ConnectionError:
        return
    finally:
        await stream.close()


async def _try_send(stream, response: Response) -> None:
    try:
        await stream.write_frame(encode_response(response))
    except Exception:
        pass
