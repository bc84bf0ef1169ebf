"""Shared test machinery: canonical channel set, in-process gateway,
self-signed certificates, and trace oracles."""

from __future__ import annotations

import asyncio
import datetime
import ipaddress
from contextlib import asynccontextmanager
from pathlib import Path
from types import SimpleNamespace

from evhub.config import parse_config
from evhub.daemon import Gateway
from evhub.ingest import Metrics, SensorMonitor
from evhub.mocks import MockModem, MockPushServer, ModemScript
from evhub.model import (
    BooleanFlag,
    Channel,
    NotificationPolicy,
    Op,
    Reading,
    Role,
    Threshold,
    evaluate,
)
from evhub.registry import Account, Registry, hash_password

ADMIN = ("admin", "admin-pw")
SUBSCRIBER = ("subscriber", "subscriber-pw")
TEST_ITERATIONS = 1000  # keep PBKDF2 cheap in tests; format is identical

# (criterion name, passed, measurement note); printed in the terminal summary
ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def run(coro):
    """Run one coroutine to completion on a fresh event loop."""
    return asyncio.run(coro)


def make_channels() -> list[Channel]:
    """The example channel set: outage flag, high temperature, low light."""
    return [
        Channel(0, "power_outage", BooleanFlag(),
                NotificationPolicy(push=True, sms=True)),
        Channel(1, "high_temperature", Threshold(Op.GT, 50.0, unit="°C"),
                NotificationPolicy(push=True)),
        Channel(2, "low_light", Threshold(Op.LT, 20.0, unit="lux"),
                NotificationPolicy(push=True, sms=True)),
    ]


def make_accounts() -> list[Account]:
    return [
        Account(Role.ADMIN, ADMIN[0], hash_password(ADMIN[1], iterations=TEST_ITERATIONS)),
        Account(Role.SUBSCRIBER, SUBSCRIBER[0],
                hash_password(SUBSCRIBER[1], iterations=TEST_ITERATIONS)),
    ]


def make_registry() -> Registry:
    return Registry(channels=make_channels(), accounts=make_accounts())


def make_monitor() -> SensorMonitor:
    return SensorMonitor(make_registry(), Metrics())


def reading(channel: int, value: float, at: float = 0.0) -> Reading:
    return Reading(channel=channel, value=value, received_at=at)


def expected_firing_indices(condition, values) -> list[int]:
    """Brute-force oracle: indices of false-to-true transitions, with the
    state before the first reading counted as unsatisfied."""
    indices = []
    previous = False
    for i, value in enumerate(values):
        satisfied = evaluate(condition, value)
        if satisfied and not previous:
            indices.append(i)
        previous = satisfied
    return indices


def channels_config() -> list[dict]:
    return [
        {"id": 0, "name": "power_outage", "condition": {"kind": "boolean_flag"},
         "policy": {"push": True, "sms": True}},
        {"id": 1, "name": "high_temperature",
         "condition": {"kind": "threshold", "op": "gt", "threshold": 50.0, "unit": "°C"},
         "policy": {"push": True}},
        {"id": 2, "name": "low_light",
         "condition": {"kind": "threshold", "op": "lt", "threshold": 20.0, "unit": "lux"},
         "policy": {"push": True, "sms": True}},
    ]


def accounts_config() -> list[dict]:
    return [
        {"role": "Admin", "name": ADMIN[0],
         "digest": hash_password(ADMIN[1], iterations=TEST_ITERATIONS)},
        {"role": "Subscriber", "name": SUBSCRIBER[0],
         "digest": hash_password(SUBSCRIBER[1], iterations=TEST_ITERATIONS)},
    ]


_CERT_CACHE: dict[str, bytes] = {}


def write_self_signed_cert(directory: Path) -> tuple[str, str]:
    """Self-signed localhost certificate; generated once, reused per run."""
    if not _CERT_CACHE:
        from cryptography import x509
        from cryptography.hazmat.primitives import hashes, serialization
        from cryptography.hazmat.primitives.asymmetric import rsa
        from cryptography.x509.oid import NameOID

        key = rsa.generate_private_key(public_exponent=65537, key_size=2048)
        name = x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, "127.0.0.1")])
        now = datetime.datetime.now(datetime.timezone.utc)
        cert = (
            x509.CertificateBuilder()
            .subject_name(name)
            .issuer_name(name)
            .public_key(key.public_key())
            .serial_number(x509.random_serial_number())
            .not_valid_before(now - datetime.timedelta(days=1))
            .not_valid_after(now + datetime.timedelta(days=365))
            .add_extension(
                x509.SubjectAlternativeName(
                    [x509.IPAddress(ipaddress.ip_address("127.0.0.1"))]),
                critical=False,
            )
            .sign(key, hashes.SHA256())
        )
        _CERT_CACHE["cert"] = cert.public_bytes(serialization.Encoding.PEM)
        _CERT_CACHE["key"] = key.private_bytes(
            serialization.Encoding.PEM,
            serialization.PrivateFormat.PKCS8,
            serialization.NoEncryption(),
        )
    certfile = directory / "cert.pem"
    keyfile = directory / "key.pem"
    certfile.write_bytes(_CERT_CACHE["cert"])
    keyfile.write_bytes(_CERT_CACHE["key"])
    return str(certfile), str(keyfile)


@asynccontextmanager
async def gateway_ctx(tmp: Path, *, channels: list[dict] | None = None,
                      with_push: bool = True, with_modem: bool = True,
                      modem_script: ModemScript | None = None,
                      client_kinds: tuple[str, ...] = ("tcp",),
                      queue_capacity: int = 4096,
                      snapshot: bool = True,
                      notify: dict | None = None,
                      session: dict | None = None):
    """An in-process gateway with mock notification endpoints.

    Yields a namespace with the gateway, mocks, sensor port, and one
    client URL per requested kind ("tcp", "tls", "unix", "websocket").
    """
    push = MockPushServer().start() if with_push else None
    modem = None
    if with_modem:
        modem = await MockModem(str(tmp / "modem.sock"), script=modem_script).start()

    client_entries = []
    for kind in client_kinds:
        if kind == "tcp":
            client_entries.append({"kind": "tcp", "host": "127.0.0.1", "port": 0})
        elif kind == "tls":
            certfile, keyfile = write_self_signed_cert(tmp)
            client_entries.append({"kind": "tcp", "host": "127.0.0.1", "port": 0,
                                   "certfile": certfile, "keyfile": keyfile})
        elif kind == "unix":
            client_entries.append({"kind": "unix", "path": str(tmp / "client.sock")})
        elif kind == "websocket":
            client_entries.append({"kind": "websocket", "host": "127.0.0.1", "port": 0})
        else:
            raise ValueError(kind)

    obj: dict = {
        "channels": channels if channels is not None else channels_config(),
        "accounts": accounts_config(),
        "sensor": {"host": "127.0.0.1", "port": 0},
        "clients": client_entries,
        "notify": {"queue_capacity": queue_capacity, **(notify or {})},
    }
    if snapshot:
        obj["snapshot_path"] = str(tmp / "state.json")
    if push is not None:
        obj["push"] = {"url": push.url, "timeout": 5.0}
    if modem is not None:
        obj["modem"] = {"path": str(tmp / "modem.sock"), "step_timeout": 5.0,
                        "ring_seconds": 0.01}
    if session:
        obj["session"] = session

    gateway = Gateway(parse_config(obj, base_dir=tmp))
    await gateway.start()
    info = gateway.describe()
    urls: dict[str, str] = {}
    for requested, bound in zip(client_kinds, info["clients"]):
        if "path" in bound:
            urls[requested] = f"unix://{bound['path']}"
        elif bound["kind"] == "tcp+tls":
            urls[requested] = f"tls://127.0.0.1:{bound['port']}"
        elif bound["kind"] == "websocket":
            urls[requested] = f"ws://127.0.0.1:{bound['port']}"
        else:
            urls[requested] = f"tcp://127.0.0.1:{bound['port']}"
    try:
        yield SimpleNamespace(
            gateway=gateway,
            push=push,
            modem=modem,
            sensor_port=info["sensor"]["port"],
            urls=urls,
            url=urls[client_kinds[0]],
            tmp=tmp,
        )
    finally:
        await gateway.stop()
        if push is not None:
            push.stop()
        if modem is not None:
            await modem.stop()


async def open_sensor(port: int) -> tuple[asyncio.StreamReader, asyncio.StreamWriter]:
    return await asyncio.open_connection("127.0.0.1", port)


async def send_reading(writer: asyncio.StreamWriter, channel: int, value: float) -> None:
    from evhub.wire import encode_reading

    writer.write(encode_reading(channel, value) + b"\n")
    await writer.drain()


async def settle(predicate, timeout: float = 10.0, interval: float = 0.005) -> bool:
    """Poll until predicate() is true or the timeout passes."""
    deadline = asyncio.get_running_loop().time() + timeout
    while asyncio.get_running_loop().time() < deadline:
        if predicate():
            return True
        await asyncio.sleep(interval)
    return predicate()
