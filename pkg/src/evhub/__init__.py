"""evhub: a publish-subscribe event gateway for IoT sensor fleets.

Sensor nodes publish channel readings over TCP; the gateway filters them
against per-channel conditions and notifies authenticated subscribers via
push, SMS, and ring-only calls. Clients configure the system through a
session-based JSON command protocol served over TCP, TLS, a local stream
socket, and a WebSocket bridge.
"""

from .model import (
    Action,
    BooleanFlag,
    Channel,
    Command,
    Condition,
    NotificationPolicy,
    Op,
    Reading,
    Response,
    Role,
    SubscriberAddress,
    Threshold,
    evaluate,
)
from .registry import Account, Registry

__version__ = "0.1.0"

__all__ = [
    "Account",
    "Action",
    "BooleanFlag",
    "Channel",
    "Command",
    "Condition",
    "NotificationPolicy",
    "Op",
    "Reading",
    "Registry",
    "Response",
    "Role",
    "SubscriberAddress",
    "Threshold",
    "evaluate",
    "__version__",
]
