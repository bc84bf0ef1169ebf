"""Domain model shared by every gateway component.

A channel pairs a numeric id with a trigger condition and a notification
policy; a reading is one sensor sample; a subscriber address identifies a
notification target by phone number. Everything here is an immutable
value, safe to share between concurrent tasks.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum

PHONE_PATTERN = re.compile(r"\+[0-9]{8,15}")


def is_valid_phone(phone: str) -> bool:
    """E.164-style check: leading '+' followed by 8 to 15 digits."""
    return isinstance(phone, str) and PHONE_PATTERN.fullmatch(phone) is not None


class Op(Enum):
    """Comparison operator of a threshold condition."""

    GT = "gt"
    GE = "ge"
    LT = "lt"
    LE = "le"
    EQ = "eq"


@dataclass(frozen=True)
class Threshold:
    """Condition satisfied when the reading compares true against a bound.

    EQ compares exactly; channels needing tolerance should be modeled as
    a pair of thresholds instead.
    """

    op: Op
    threshold: float
    unit: str = ""

    def __post_init__(self) -> None:
        if not isinstance(self.threshold, (int, float)) or not math.isfinite(self.threshold):
            raise ValueError(f"threshold must be a finite number, got {self.threshold!r}")


@dataclass(frozen=True)
class BooleanFlag:
    """Condition satisfied while the reading value is nonzero."""


Condition = Threshold | BooleanFlag

_COMPARE = {
    Op.GT: lambda v, t: v > t,
    Op.GE: lambda v, t: v >= t,
    Op.LT: lambda v, t: v < t,
    Op.LE: lambda v, t: v <= t,
    Op.EQ: lambda v, t: v == t,
}


def evaluate(condition: Condition, value: float) -> bool:
    """Decide whether a finite value satisfies the condition.

    Pure and deterministic; total over finite inputs.
    """
    if isinstance(condition, BooleanFlag):
        return value != 0
    return _COMPARE[condition.op](value, condition.threshold)


@dataclass(frozen=True)
class NotificationPolicy:
    """Which transports a channel notifies through. At least one is enabled."""

    push: bool = False
    sms: bool = False
    call: bool = False

    def __post_init__(self) -> None:
        if not (self.push or self.sms or self.call):
            raise ValueError("notification policy must enable at least one transport")


@dataclass(frozen=True)
class Channel:
    """An event definition: unique id and name, trigger condition, policy.

    retrigger_interval, when set, re-fires an event that stays satisfied
    for longer than the interval (seconds); by default a channel fires
    only on the unsatisfied-to-satisfied edge.
    """

    id: int
    name: str
    condition: Condition
    policy: NotificationPolicy
    retrigger_interval: float | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.id, int) or isinstance(self.id, bool) or self.id < 0:
            raise ValueError(f"channel id must be a non-negative integer, got {self.id!r}")
        if not self.name or not isinstance(self.name, str):
            raise ValueError("channel name must be nonempty text")
        if self.retrigger_interval is not None and self.retrigger_interval <= 0:
            raise ValueError("retrigger_interval must be positive when set")


@dataclass(frozen=True)
class Reading:
    """One sensor sample: channel id, finite value, receipt timestamp.

    received_at is a monotonic-clock stamp taken when the frame was decoded.
    """

    channel: int
    value: float
    received_at: float


@dataclass(frozen=True)
class SubscriberAddress:
    """Notification target: phone number (identity key) plus push token."""

    phone: str
    push_token: str

    def __post_init__(self) -> None:
        if not is_valid_phone(self.phone):
            raise ValueError(f"phone must be '+' followed by 8-15 digits, got {self.phone!r}")
        if not self.push_token or not isinstance(self.push_token, str):
            raise ValueError("push_token must be nonempty text")


class Role(Enum):
    """The two account roles the gateway knows."""

    ADMIN = "Admin"
    SUBSCRIBER = "Subscriber"


class Action(Enum):
    """The eight command actions of the client protocol."""

    SESSION_INITIATION = "SessionInitiation"
    CHANGE_PASSWORD = "ChangePassword"
    GET_SUBSCRIBER_LIST = "GetSubscriberList"
    DEL_SUBSCRIBER = "DelSubscriber"
    ADD_SUBSCRIBER = "AddSubscriber"
    SUBSCRIBE = "Subscribe"
    UNSUBSCRIBE = "Unsubscribe"
    UPDATE = "Update"


# Required argument set per action. Decode rejects frames missing any of
# these; Command construction rejects extras outside them.
REQUIRED_ARGS: dict[Action, tuple[str, ...]] = {
    Action.SESSION_INITIATION: ("account", "password"),
    Action.CHANGE_PASSWORD: ("account", "new_password"),
    Action.GET_SUBSCRIBER_LIST: ("event",),
    Action.DEL_SUBSCRIBER: ("phone", "event"),
    Action.ADD_SUBSCRIBER: ("phone", "fcm_id", "event"),
    Action.SUBSCRIBE: ("phone", "fcm_id", "event"),
    Action.UNSUBSCRIBE: ("phone", "event"),
    Action.UPDATE: (),
}

_ARG_FIELDS = ("account", "password", "new_password", "phone", "fcm_id", "event")


@dataclass(frozen=True)
class Command:
    """One client command; carries exactly its action's required arguments."""

    action: Action
    account: str | None = None
    password: str | None = None
    new_password: str | None = None
    phone: str | None = None
    fcm_id: str | None = None
    event: str | None = None

    def __post_init__(self) -> None:
        required = REQUIRED_ARGS[self.action]
        for name in _ARG_FIELDS:
            value = getattr(self, name)
            if name in required:
                if not isinstance(value, str):
                    raise ValueError(f"{self.action.value} requires text field {name!r}")
            elif value is not None:
                raise ValueError(f"{self.action.value} does not take field {name!r}")

    def args(self) -> dict[str, str]:
        """The action's arguments as a name-to-value mapping."""
        return {name: getattr(self, name) for name in REQUIRED_ARGS[self.action]}


@dataclass
class Response:
    """A reply to one command: result tag, desc code, optional extras.

    extras are flattened into the wire object next to result and desc
    (e.g. a subscriber list or channel status board).
    """

    result: str
    desc: str
    extras: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.result not in ("ok", "error"):
            raise ValueError(f"result must be 'ok' or 'error', got {self.result!r}")

    @classmethod
    def make_ok(cls, desc: str = "ok", **extras) -> "Response":
        return cls("ok", desc, extras)

    @classmethod
    def make_error(cls, desc: str, **extras) -> "Response":
        return cls("error", desc, extras)

    @property
    def is_ok(self) -> bool:
        return self.result == "ok"
