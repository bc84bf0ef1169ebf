"""Gateway configuration: one JSON file describing channels, accounts,
endpoints, and notification settings.

Configuration errors carry a dotted field path (and a line number for
JSON syntax errors) so startup failures name the offending entry.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .model import Channel
from .registry import Account, account_from_obj, channel_from_obj


class ConfigError(Exception):
    """Configuration file rejected; message names the field or line."""


@dataclass
class SensorEndpoint:
    host: str = "0.0.0.0"
    port: int = 7001
    read_timeout: float = 300.0


@dataclass
class ClientEndpoint:
    """One client listener. kind is tcp (optionally with TLS), unix, or websocket."""

    kind: str = "tcp"
    host: str = "0.0.0.0"
    port: int = 7002
    path: str | None = None
    certfile: str | None = None
    keyfile: str | None = None

    @property
    def tls(self) -> bool:
        return self.certfile is not None


@dataclass
class PushConfig:
    url: str = ""
    auth_header: str | None = None
    timeout: float = 10.0


@dataclass
class ModemConfig:
    path: str = ""
    step_timeout: float = 30.0
    ring_seconds: float = 15.0


@dataclass
class NotifyConfig:
    retries: int = 0
    retry_backoff: float = 1.0
    call_mode: str = "escalation"  # or "always"
    queue_capacity: int = 1024
    push_concurrency: int = 64


@dataclass
class SessionConfig:
    init_timeout: float = 10.0
    idle_timeout: float = 120.0


@dataclass
class GatewayConfig:
    channels: list[Channel]
    accounts: list[Account]
    snapshot_path: str | None = None
    sensor: SensorEndpoint = field(default_factory=SensorEndpoint)
    clients: list[ClientEndpoint] = field(default_factory=lambda: [ClientEndpoint()])
    push: PushConfig | None = None
    modem: ModemConfig | None = None
    notify: NotifyConfig = field(default_factory=NotifyConfig)
    session: SessionConfig = field(default_factory=SessionConfig)


def load_config(path: str | Path) -> GatewayConfig:
    """Read and validate a gateway config file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return parse_config(obj, base_dir=path.parent)


def parse_config(obj: dict, base_dir: Path | None = None) -> GatewayConfig:
    """Build a GatewayConfig from a parsed JSON object.

    Relative file paths (snapshot, certificates, socket paths) are resolved
    against the config file's directory.
    """
    if not isinstance(obj, dict):
        raise ConfigError("config root must be a JSON object")

    def resolve(p: str | None) -> str | None:
        if p is None or base_dir is None:
            return p
        return str((base_dir / p).resolve()) if not Path(p).is_absolute() else p

    channels = _parse_channels(obj.get("channels"))
    accounts = _parse_accounts(obj.get("accounts"))

    cfg = GatewayConfig(channels=channels, accounts=accounts)
    cfg.snapshot_path = resolve(_opt_str(obj, "snapshot_path"))

    sensor = obj.get("sensor", {})
    _expect(isinstance(sensor, dict), "sensor: must be an object")
    cfg.sensor = SensorEndpoint(
        host=sensor.get("host", cfg.sensor.host),
        port=sensor.get("port", cfg.sensor.port),
        read_timeout=sensor.get("read_timeout", cfg.sensor.read_timeout),
    )

    if "clients" in obj:
        _expect(isinstance(obj["clients"], list) and obj["clients"],
                "clients: must be a nonempty array of endpoints")
        cfg.clients = [_parse_client(e, i, resolve) for i, e in enumerate(obj["clients"])]

    if obj.get("push") is not None:
        push = obj["push"]
        _expect(isinstance(push, dict) and isinstance(push.get("url"), str),
                "push.url: required text field")
        cfg.push = PushConfig(
            url=push["url"],
            auth_header=push.get("auth_header"),
            timeout=push.get("timeout", 10.0),
        )

    if obj.get("modem") is not None:
        modem = obj["modem"]
        _expect(isinstance(modem, dict) and isinstance(modem.get("path"), str),
                "modem.path: required text field")
        cfg.modem = ModemConfig(
            path=resolve(modem["path"]),
            step_timeout=modem.get("step_timeout", 30.0),
            ring_seconds=modem.get("ring_seconds", 15.0),
        )

    notify = obj.get("notify", {})
    _expect(isinstance(notify, dict), "notify: must be an object")
    cfg.notify = NotifyConfig(
        retries=notify.get("retries", 0),
        retry_backoff=notify.get("retry_backoff", 1.0),
        call_mode=notify.get("call_mode", "escalation"),
        queue_capacity=notify.get("queue_capacity", 1024),
        push_concurrency=notify.get("push_concurrency", 64),
    )
    _expect(cfg.notify.call_mode in ("escalation", "always"),
            f"notify.call_mode: must be 'escalation' or 'always', got {cfg.notify.call_mode!r}")

    session = obj.get("session", {})
    _expect(isinstance(session, dict), "session: must be an object")
    cfg.session = SessionConfig(
        init_timeout=session.get("init_timeout", 10.0),
        idle_timeout=session.get("idle_timeout", 120.0),
    )
    return cfg


def _expect(ok: bool, message: str) -> None:
    if not ok:
        raise ConfigError(message)


def _opt_str(obj: dict, key: str) -> str | None:
    value = obj.get(key)
    if value is not None and not isinstance(value, str):
        raise ConfigError(f"{key}: must be text")
    return value


def _parse_channels(raw) -> list[Channel]:
    _expect(isinstance(raw, list) and raw, "channels: must be a nonempty array")
    channels: list[Channel] = []
    seen_ids: set[int] = set()
    seen_names: set[str] = set()
    for i, entry in enumerate(raw):
        where = f"channels[{i}]"
        _expect(isinstance(entry, dict), f"{where}: must be an object")
        try:
            channel = channel_from_obj(entry)
        except KeyError as exc:
            raise ConfigError(f"{where}: missing field {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from None
        _expect(channel.id not in seen_ids, f"{where}.id: duplicate channel id {channel.id}")
        _expect(channel.name not in seen_names,
                f"{where}.name: duplicate channel name {channel.name!r}")
        seen_ids.add(channel.id)
        seen_names.add(channel.name)
        channels.append(channel)
    return channels


def _parse_accounts(raw) -> list[Account]:
    _expect(isinstance(raw, list) and raw, "accounts: must be a nonempty array")
    accounts: list[Account] = []
    for i, entry in enumerate(raw):
        where = f"accounts[{i}]"
        _expect(isinstance(entry, dict), f"{where}: must be an object")
        try:
            accounts.append(account_from_obj(entry))
        except KeyError as exc:
            raise ConfigError(f"{where}: missing field {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from None
    return accounts


def _parse_client(entry, index: int, resolve) -> ClientEndpoint:
    where = f"clients[{index}]"
    _expect(isinstance(entry, dict), f"{where}: must be an object")
    kind = entry.get("kind", "tcp")
    _expect(kind in ("tcp", "unix", "websocket"),
            f"{where}.kind: must be tcp, unix, or websocket, got {kind!r}")
    ep = ClientEndpoint(
        kind=kind,
        host=entry.get("host", "0.0.0.0"),
        port=entry.get("port", 7003 if kind == "websocket" else 7002),
        path=resolve(entry.get("path")),
        certfile=resolve(entry.get("certfile")),
        keyfile=resolve(entry.get("keyfile")),
    )
    if kind == "unix":
        _expect(ep.path is not None, f"{where}.path: required for unix endpoints")
    if ep.certfile is not None:
        _expect(ep.keyfile is not None, f"{where}.keyfile: required when certfile is set")
        _expect(kind == "tcp", f"{where}: TLS applies to tcp endpoints only")
    return ep
