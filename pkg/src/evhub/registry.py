"""Gateway state owner: channels, latest values, subscriptions, accounts.

All mutable gateway state lives here and is accessed through one Registry
instance per gateway. Operations are synchronous and atomic; under the
single event loop that the gateway runs, every call is linearizable.

Snapshots persist channels, subscriptions, and accounts as one JSON
document. Latest readings are deliberately not persisted: a stale value
after a restart is worse than none.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import logging
import secrets
from dataclasses import dataclass

from .model import (
    BooleanFlag,
    Channel,
    Condition,
    NotificationPolicy,
    Op,
    Reading,
    Role,
    SubscriberAddress,
    Threshold,
)

log = logging.getLogger(__name__)

SNAPSHOT_VERSION = 1

DEFAULT_PBKDF2_ITERATIONS = 100_000


class RegistryError(Exception):
    """Base class for registry operation failures."""


class UnknownEvent(RegistryError):
    """No channel carries the named event."""


class UnknownChannel(RegistryError):
    """No channel carries the numeric id."""


class NotSubscribed(RegistryError):
    """The phone is not in the channel's subscriber set."""


class UnknownAccount(RegistryError):
    """No account with that name exists."""


class AuthFailed(RegistryError):
    """Credentials rejected. Deliberately identical for unknown accounts
    and wrong passwords so clients cannot probe for account names."""


class CorruptSnapshot(RegistryError):
    """Snapshot bytes could not be restored."""


def hash_password(password: str, *, iterations: int = DEFAULT_PBKDF2_ITERATIONS,
                  salt: bytes | None = None) -> str:
    """Salted PBKDF2-SHA256 digest, self-describing format."""
    if salt is None:
        salt = secrets.token_bytes(16)
    derived = hashlib.pbkdf2_hmac("sha256", password.encode("utf-8"), salt, iterations)
    return f"pbkdf2_sha256${iterations}${salt.hex()}${derived.hex()}"


def verify_password(password: str, digest: str) -> bool:
    """Check a password against a digest produced by hash_password."""
    try:
        scheme, iterations, salt_hex, want_hex = digest.split("$")
        if scheme != "pbkdf2_sha256":
            return False
        derived = hashlib.pbkdf2_hmac(
            "sha256", password.encode("utf-8"), bytes.fromhex(salt_hex), int(iterations)
        )
        return hmac.compare_digest(derived.hex(), want_hex)
    except (ValueError, AttributeError):
        return False


def _digest_iterations(digest: str) -> int:
    try:
        return int(digest.split("$")[1])
    except (IndexError, ValueError):
        return DEFAULT_PBKDF2_ITERATIONS


@dataclass
class Account:
    """One login: role, account name, salted password digest."""

    role: Role
    name: str
    password_digest: str


# ── JSON object converters (shared by snapshots and the config file) ──

def condition_to_obj(cond: Condition) -> dict:
    if isinstance(cond, BooleanFlag):
        return {"kind": "boolean_flag"}
    obj = {"kind": "threshold", "op": cond.op.value, "threshold": cond.threshold}
    if cond.unit:
        obj["unit"] = cond.unit
    return obj


def condition_from_obj(obj: dict) -> Condition:
    kind = obj.get("kind")
    if kind == "boolean_flag":
        return BooleanFlag()
    if kind == "threshold":
        return Threshold(op=Op(obj["op"]), threshold=obj["threshold"], unit=obj.get("unit", ""))
    raise ValueError(f"unknown condition kind {kind!r}")


def channel_to_obj(channel: Channel) -> dict:
    obj = {
        "id": channel.id,
        "name": channel.name,
        "condition": condition_to_obj(channel.condition),
        "policy": {
            "push": channel.policy.push,
            "sms": channel.policy.sms,
            "call": channel.policy.call,
        },
    }
    if channel.retrigger_interval is not None:
        obj["retrigger_interval"] = channel.retrigger_interval
    return obj


def channel_from_obj(obj: dict) -> Channel:
    policy = obj["policy"]
    return Channel(
        id=obj["id"],
        name=obj["name"],
        condition=condition_from_obj(obj["condition"]),
        policy=NotificationPolicy(
            push=bool(policy.get("push", False)),
            sms=bool(policy.get("sms", False)),
            call=bool(policy.get("call", False)),
        ),
        retrigger_interval=obj.get("retrigger_interval"),
    )


def account_to_obj(account: Account) -> dict:
    return {"role": account.role.value, "name": account.name, "digest": account.password_digest}


def account_from_obj(obj: dict) -> Account:
    return Account(role=Role(obj["role"]), name=obj["name"], password_digest=obj["digest"])


class Registry:
    """Owner of all gateway state, with query and mutation operations.

    Channels are fixed at construction (they come from the gateway config;
    the command set has no channel-creation command). Exactly one Admin
    account exists; no operation can create a second or delete it.

    mutation_calls counts every invocation of a state-mutating command
    operation, successful or not; the session layer's safety tests assert
    it stays zero before authentication.
    """

    def __init__(self, channels: list[Channel] | tuple[Channel, ...],
                 accounts: list[Account] | tuple[Account, ...]):
        self._channels: dict[int, Channel] = {}
        self._by_name: dict[str, Channel] = {}
        for channel in channels:
            if channel.id in self._channels:
                raise ValueError(f"duplicate channel id {channel.id}")
            if channel.name in self._by_name:
                raise ValueError(f"duplicate channel name {channel.name!r}")
            self._channels[channel.id] = channel
            self._by_name[channel.name] = channel

        self._accounts: dict[str, Account] = {}
        admins = 0
        for account in accounts:
            if account.name in self._accounts:
                raise ValueError(f"duplicate account name {account.name!r}")
            self._accounts[account.name] = account
            admins += account.role is Role.ADMIN
        if admins != 1:
            raise ValueError(f"exactly one Admin account is required, got {admins}")

        # value, received_at pairs keyed by channel id
        self._latest: dict[int, tuple[float, float]] = {}
        # channel id -> phone -> address; dict keys keep phones unique
        self._subs: dict[int, dict[str, SubscriberAddress]] = {cid: {} for cid in self._channels}
        self.mutation_calls = 0
        # Equal-cost verification target for unknown account names.
        iterations = min(_digest_iterations(a.password_digest) for a in self._accounts.values())
        self._decoy_digest = hash_password(secrets.token_hex(8), iterations=iterations)

    # ── channel queries ──────────────────────────────────────────────

    def channels(self) -> list[Channel]:
        """All channels, ordered by id."""
        return [self._channels[cid] for cid in sorted(self._channels)]

    def channel_by_id(self, channel_id: int) -> Channel:
        try:
            return self._channels[channel_id]
        except KeyError:
            raise UnknownChannel(f"no channel with id {channel_id}") from None

    def channel_by_name(self, event_name: str) -> Channel:
        try:
            return self._by_name[event_name]
        except KeyError:
            raise UnknownEvent(f"no event named {event_name!r}") from None

    def latest(self, channel_id: int) -> tuple[float, float] | None:
        """Latest (value, received_at) for the channel, or None before any reading."""
        return self._latest.get(channel_id)

    # ── subscriptions ────────────────────────────────────────────────

    def subscribe(self, event_name: str, addr: SubscriberAddress) -> None:
        """Add addr to the named channel's set; re-subscribing the same
        phone replaces its push token."""
        self.mutation_calls += 1
        channel = self.channel_by_name(event_name)
        self._subs[channel.id][addr.phone] = addr

    def unsubscribe(self, event_name: str, phone: str) -> None:
        """Remove the phone from the named channel's set."""
        self.mutation_calls += 1
        channel = self.channel_by_name(event_name)
        if phone not in self._subs[channel.id]:
            raise NotSubscribed(f"{phone} is not subscribed to {event_name!r}")
        del self._subs[channel.id][phone]

    # Admin-initiated edits share subscribe/unsubscribe semantics exactly;
    # authorization is the session layer's concern.
    admin_add_subscriber = subscribe
    admin_del_subscriber = unsubscribe

    def list_subscribers(self, event_name: str) -> list[SubscriberAddress]:
        """Snapshot of the channel's subscribers, sorted by phone."""
        channel = self.channel_by_name(event_name)
        return [self._subs[channel.id][p] for p in sorted(self._subs[channel.id])]

    def subscriber_count(self) -> int:
        return sum(len(s) for s in self._subs.values())

    # ── accounts ─────────────────────────────────────────────────────

    def change_password(self, account_name: str, new_password: str) -> None:
        """Replace the account's digest; the old password stops verifying."""
        self.mutation_calls += 1
        account = self._accounts.get(account_name)
        if account is None:
            raise UnknownAccount(f"no account named {account_name!r}")
        iterations = _digest_iterations(account.password_digest)
        account.password_digest = hash_password(new_password, iterations=iterations)

    def verify_credentials(self, account_name: str, password: str) -> Role:
        """Return the account's role, or raise AuthFailed.

        Unknown account and wrong password are indistinguishable; a decoy
        digest is verified for unknown names to keep the cost similar.
        """
        account = self._accounts.get(account_name)
        if account is None:
            verify_password(password, self._decoy_digest)
            raise AuthFailed("bad account or password")
        if not verify_password(password, account.password_digest):
            raise AuthFailed("bad account or password")
        return account.role

    def account(self, name: str) -> Account:
        try:
            return self._accounts[name]
        except KeyError:
            raise UnknownAccount(f"no account named {name!r}") from None

    # ── readings ─────────────────────────────────────────────────────

    def record_reading(self, reading: Reading) -> float | None:
        """Update the channel's latest value; return the prior value (None
        if this is the first reading) for edge detection."""
        if reading.channel not in self._channels:
            raise UnknownChannel(f"no channel with id {reading.channel}")
        prev = self._latest.get(reading.channel)
        self._latest[reading.channel] = (reading.value, reading.received_at)
        return prev[0] if prev is not None else None

    # ── durability ───────────────────────────────────────────────────

    def snapshot(self) -> bytes:
        """Serialize channels, subscriptions, and accounts to one JSON document."""
        doc = {
            "version": SNAPSHOT_VERSION,
            "channels": [channel_to_obj(c) for c in self.channels()],
            "subscriptions": [
                {
                    "channel": cid,
                    "subscribers": [
                        {"phone": a.phone, "fcm_id": a.push_token}
                        for _, a in sorted(self._subs[cid].items())
                    ],
                }
                for cid in sorted(self._subs)
            ],
            "accounts": [account_to_obj(a) for a in self._accounts.values()],
        }
        return json.dumps(doc, ensure_ascii=False, indent=None).encode("utf-8")

    @classmethod
    def restore(cls, data: bytes) -> "Registry":
        """Rebuild a registry from snapshot bytes; raises CorruptSnapshot."""
        doc = _parse_snapshot(data)
        try:
            registry = cls(
                channels=[channel_from_obj(o) for o in doc["channels"]],
                accounts=[account_from_obj(o) for o in doc["accounts"]],
            )
            _load_subscriptions(registry, doc, strict=True)
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptSnapshot(f"snapshot is not well-formed: {exc}") from None
        return registry

    def merge_snapshot(self, data: bytes) -> None:
        """Adopt a snapshot's accounts and subscriptions into this registry.

        Channel definitions stay as configured; snapshot subscriptions for
        channels that no longer exist are dropped with a warning. Account
        digests are adopted where the account name still exists.
        """
        doc = _parse_snapshot(data)
        try:
            for obj in doc["accounts"]:
                restored = account_from_obj(obj)
                current = self._accounts.get(restored.name)
                if current is not None:
                    current.password_digest = restored.password_digest
            _load_subscriptions(self, doc, strict=False)
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptSnapshot(f"snapshot is not well-formed: {exc}") from None


def _parse_snapshot(data: bytes) -> dict:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptSnapshot(f"snapshot is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("version") != SNAPSHOT_VERSION:
        raise CorruptSnapshot("snapshot has no recognizable version tag")
    return doc


def _load_subscriptions(registry: Registry, doc: dict, *, strict: bool) -> None:
    for entry in doc["subscriptions"]:
        cid = entry["channel"]
        if cid not in registry._channels:
            if strict:
                raise CorruptSnapshot(f"subscription references unknown channel {cid}")
            log.warning("dropping snapshot subscriptions for removed channel %s", cid)
            continue
        registry._subs[cid] = {
            o["phone"]: SubscriberAddress(phone=o["phone"], push_token=o["fcm_id"])
            for o in entry["subscribers"]
        }
