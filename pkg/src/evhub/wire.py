"""Wire codec: newline-delimited JSON for commands, responses, and readings.

One frame is one UTF-8 JSON object on a single line. The encoders return
the object text without the line terminator; stream transports own the
framing. Frames longer than MAX_FRAME_BYTES are a framing violation.
"""

from __future__ import annotations

import json
import math
import time

from .model import REQUIRED_ARGS, Action, Command, Reading, Response

MAX_FRAME_BYTES = 64 * 1024

_ACTIONS_BY_TAG = {action.value: action for action in Action}


class DecodeError(Exception):
    """Base class for frame decode failures."""


class MalformedJson(DecodeError):
    """Frame is not a JSON object, or a field has the wrong type."""


class UnknownAction(DecodeError):
    """The "action" tag names no known command."""


class MissingField(DecodeError):
    """A required field for the action is absent."""


class NonFiniteValue(DecodeError):
    """A reading carried NaN or an infinity."""


def _dump(obj: dict) -> bytes:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False).encode("utf-8")


def _parse_object(data: bytes | str) -> dict:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedJson(f"frame is not valid UTF-8: {exc}") from None
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise MalformedJson(f"frame is not valid JSON: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise MalformedJson(f"frame must be a JSON object, got {type(obj).__name__}")
    return obj


def encode_command(cmd: Command) -> bytes:
    """Serialize a command: the action tag followed by its arguments."""
    obj: dict = {"action": cmd.action.value}
    obj.update(cmd.args())
    return _dump(obj)


def decode_command(data: bytes | str) -> Command:
    """Parse a command frame, enforcing the action's required field set."""
    obj = _parse_object(data)
    tag = obj.get("action")
    if tag is None:
        raise MissingField("command frame has no 'action' tag")
    if not isinstance(tag, str):
        raise MalformedJson("'action' tag must be text")
    action = _ACTIONS_BY_TAG.get(tag)
    if action is None:
        raise UnknownAction(f"unknown action {tag!r}")
    args: dict[str, str] = {}
    for name in REQUIRED_ARGS[action]:
        if name not in obj:
            raise MissingField(f"{tag} requires field {name!r}")
        value = obj[name]
        if not isinstance(value, str):
            raise MalformedJson(f"field {name!r} must be text")
        args[name] = value
    return Command(action, **args)


def encode_response(resp: Response) -> bytes:
    """Serialize a response; extras are flattened next to result and desc."""
    obj: dict = {"result": resp.result, "desc": resp.desc}
    for key in resp.extras:
        if key in ("result", "desc"):
            raise ValueError(f"extras may not override the {key!r} tag")
    obj.update(resp.extras)
    return _dump(obj)


def decode_response(data: bytes | str) -> Response:
    """Parse a response frame (client side of the protocol)."""
    obj = _parse_object(data)
    for tag in ("result", "desc"):
        if tag not in obj:
            raise MissingField(f"response frame has no {tag!r} tag")
        if not isinstance(obj[tag], str):
            raise MalformedJson(f"{tag!r} tag must be text")
    result, desc = obj.pop("result"), obj.pop("desc")
    if result not in ("ok", "error"):
        raise MalformedJson(f"result must be 'ok' or 'error', got {result!r}")
    return Response(result, desc, obj)


def encode_reading(channel: int, value: float) -> bytes:
    """Serialize one sensor sample (publisher side)."""
    if not math.isfinite(value):
        raise ValueError(f"reading value must be finite, got {value!r}")
    return _dump({"channel": channel, "value": value})


def decode_reading(data: bytes | str) -> Reading:
    """Parse a reading frame and stamp its receipt time (monotonic clock)."""
    obj = _parse_object(data)
    if "channel" not in obj:
        raise MissingField("reading frame has no 'channel' field")
    if "value" not in obj:
        raise MissingField("reading frame has no 'value' field")
    channel = obj["channel"]
    if not isinstance(channel, int) or isinstance(channel, bool) or channel < 0:
        raise MalformedJson(f"'channel' must be a non-negative integer, got {channel!r}")
    value = obj["value"]
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise MalformedJson(f"'value' must be a number, got {value!r}")
    if not math.isfinite(value):
        raise NonFiniteValue(f"'value' must be finite, got {value!r}")
    return Reading(channel=channel, value=float(value), received_at=time.monotonic())
